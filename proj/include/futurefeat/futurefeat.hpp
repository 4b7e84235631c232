#pragma once

#include "futurefeat/autodiff.hpp"
#include "futurefeat/classifier.hpp"
#include "futurefeat/config.hpp"
#include "futurefeat/errors.hpp"
#include "futurefeat/labels.hpp"
#include "futurefeat/nets.hpp"
#include "futurefeat/optim.hpp"
#include "futurefeat/pipeline.hpp"
#include "futurefeat/predictor.hpp"
#include "futurefeat/rollout.hpp"
#include "futurefeat/segeval.hpp"
#include "futurefeat/selection.hpp"
#include "futurefeat/seqio.hpp"
#include "futurefeat/simmetrics.hpp"
#include "futurefeat/training.hpp"
