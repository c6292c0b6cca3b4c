#pragma once

#include "diffscore/dataset.hpp"
#include "diffscore/denoiser.hpp"
#include "diffscore/diagnostics.hpp"
#include "diffscore/error.hpp"
#include "diffscore/estimator.hpp"
#include "diffscore/masking.hpp"
#include "diffscore/model_io.hpp"
#include "diffscore/numeric.hpp"
#include "diffscore/parallel.hpp"
#include "diffscore/remote.hpp"
#include "diffscore/rng.hpp"
#include "diffscore/scoring.hpp"
#include "diffscore/special_functions.hpp"
#include "diffscore/stats.hpp"
#include "diffscore/text.hpp"
#include "diffscore/toy_ar_lm.hpp"
#include "diffscore/toy_masked_lm.hpp"
#include "diffscore/weights.hpp"
