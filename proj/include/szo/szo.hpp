// Copyright 2026 The sparse-zo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "szo/checkpoint.hpp"
#include "szo/error.hpp"
#include "szo/format.hpp"
#include "szo/masking.hpp"
#include "szo/models/logistic.hpp"
#include "szo/models/mlp.hpp"
#include "szo/models/quadratic.hpp"
#include "szo/models/shifted.hpp"
#include "szo/models/task.hpp"
#include "szo/models/transformer.hpp"
#include "szo/noise.hpp"
#include "szo/oracle.hpp"
#include "szo/scratch.hpp"
#include "szo/tensor.hpp"
#include "szo/zo.hpp"
