// Umbrella header: the whole pipeline in one include.
#pragma once

#include "syndoc/autograd.hpp"
#include "syndoc/backends.hpp"
#include "syndoc/config.hpp"
#include "syndoc/entities.hpp"
#include "syndoc/features.hpp"
#include "syndoc/geometry.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/image.hpp"
#include "syndoc/inference.hpp"
#include "syndoc/inquiry.hpp"
#include "syndoc/jsonl.hpp"
#include "syndoc/manifest.hpp"
#include "syndoc/metrics.hpp"
#include "syndoc/model.hpp"
#include "syndoc/pipeline.hpp"
#include "syndoc/prompts.hpp"
#include "syndoc/qa.hpp"
#include "syndoc/report.hpp"
#include "syndoc/rng.hpp"
#include "syndoc/structure_parser.hpp"
#include "syndoc/text.hpp"
#include "syndoc/tokenizer.hpp"
#include "syndoc/tuning.hpp"
