// selkd/selkd.hpp

// Copyright 2026  The selkd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Umbrella header.

#pragma once

#include "selkd/checkpoint.hpp"
#include "selkd/common.hpp"
#include "selkd/config.hpp"
#include "selkd/data.hpp"
#include "selkd/diagnostics.hpp"
#include "selkd/distill.hpp"
#include "selkd/gradcheck.hpp"
#include "selkd/metrics.hpp"
#include "selkd/model.hpp"
#include "selkd/ops.hpp"
#include "selkd/optim.hpp"
#include "selkd/selection.hpp"
#include "selkd/tensor.hpp"
#include "selkd/trainer.hpp"
