// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crossalign/analysis/embedding_analysis.hpp"
#include "crossalign/analysis/figure.hpp"
#include "crossalign/analysis/sweep.hpp"
#include "crossalign/analysis/tsne.hpp"
#include "crossalign/binary_io.hpp"
#include "crossalign/dataset.hpp"
#include "crossalign/descriptions.hpp"
#include "crossalign/embedding_cache.hpp"
#include "crossalign/error.hpp"
#include "crossalign/losses.hpp"
#include "crossalign/models.hpp"
#include "crossalign/rng.hpp"
#include "crossalign/tensor.hpp"
#include "crossalign/trainer.hpp"
