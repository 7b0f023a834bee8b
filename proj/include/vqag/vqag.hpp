#pragma once

#include "vqag/attention_map.hpp"
#include "vqag/commands.hpp"
#include "vqag/dataset.hpp"
#include "vqag/error.hpp"
#include "vqag/lexicon.hpp"
#include "vqag/manifest.hpp"
#include "vqag/metrics.hpp"
#include "vqag/miner.hpp"
#include "vqag/schedule.hpp"
#include "vqag/serialize.hpp"
#include "vqag/text.hpp"
#include "vqag/toy_model.hpp"
