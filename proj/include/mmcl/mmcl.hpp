#pragma once

// Multimodal pairwise contrastive representation learning, desk scale.
// Header-only; include this to get the whole library.

#include "mmcl/config_json.hpp"
#include "mmcl/data.hpp"
#include "mmcl/downstream.hpp"
#include "mmcl/encoders.hpp"
#include "mmcl/error.hpp"
#include "mmcl/gradcheck.hpp"
#include "mmcl/loss.hpp"
#include "mmcl/matrix.hpp"
#include "mmcl/param_store.hpp"
#include "mmcl/rng.hpp"
#include "mmcl/tape.hpp"
#include "mmcl/train.hpp"
