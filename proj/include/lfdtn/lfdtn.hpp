#pragma once

#include "lfdtn/config_io.hpp"
#include "lfdtn/error.hpp"
#include "lfdtn/evaluate.hpp"
#include "lfdtn/fft.hpp"
#include "lfdtn/grid.hpp"
#include "lfdtn/lft.hpp"
#include "lfdtn/metrics.hpp"
#include "lfdtn/motion_seg.hpp"
#include "lfdtn/phase_motion.hpp"
#include "lfdtn/plane.hpp"
#include "lfdtn/predictor.hpp"
#include "lfdtn/scene.hpp"
#include "lfdtn/selftest.hpp"
#include "lfdtn/spectra.hpp"
#include "lfdtn/tensor_io.hpp"
#include "lfdtn/training.hpp"
#include "lfdtn/transform_model.hpp"
#include "lfdtn/window.hpp"
