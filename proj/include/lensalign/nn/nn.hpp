// Copyright (c) 2026 The lensalign authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "lensalign/nn/tensor.hpp"     // IWYU pragma: export
#include "lensalign/nn/layers.hpp"     // IWYU pragma: export
#include "lensalign/nn/vq.hpp"         // IWYU pragma: export
#include "lensalign/nn/loss.hpp"       // IWYU pragma: export
#include "lensalign/nn/optim.hpp"      // IWYU pragma: export
#include "lensalign/nn/checkpoint.hpp" // IWYU pragma: export
