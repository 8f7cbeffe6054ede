#pragma once

#include "metafit/error.hpp"
#include "metafit/body_model.hpp"
#include "metafit/camera_energy.hpp"
#include "metafit/adaptive_optimizer.hpp"
#include "metafit/synth_tasks.hpp"
#include "metafit/metrics.hpp"
#include "metafit/meta_trainer.hpp"
#include "metafit/harness.hpp"
