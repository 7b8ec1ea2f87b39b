#pragma once

#include "aqtc/ablation.hpp"
#include "aqtc/aggregation.hpp"
#include "aqtc/checkpoint.hpp"
#include "aqtc/dataset.hpp"
#include "aqtc/ensemble.hpp"
#include "aqtc/errors.hpp"
#include "aqtc/evaluation.hpp"
#include "aqtc/featpack.hpp"
#include "aqtc/grounding.hpp"
#include "aqtc/pipeline.hpp"
#include "aqtc/report.hpp"
#include "aqtc/scorer.hpp"
#include "aqtc/synthetic.hpp"
#include "aqtc/training.hpp"
