/* Copyright 2026 The gmmda Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef GMMDA_GMMDA_HPP_
#define GMMDA_GMMDA_HPP_

#include "gmmda/autodiff.hpp"
#include "gmmda/data.hpp"
#include "gmmda/discrepancy.hpp"
#include "gmmda/error.hpp"
#include "gmmda/gmm.hpp"
#include "gmmda/matrix.hpp"
#include "gmmda/metrics.hpp"
#include "gmmda/nn.hpp"
#include "gmmda/rng.hpp"
#include "gmmda/serialize.hpp"
#include "gmmda/trainer.hpp"

#endif  // GMMDA_GMMDA_HPP_
