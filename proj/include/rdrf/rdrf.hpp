/* Copyright 2026 The RDRF Authors. All Rights Reserved.

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

// Umbrella header.

#pragma once

#include "rdrf/autograd.hpp"
#include "rdrf/blind.hpp"
#include "rdrf/checkpoint.hpp"
#include "rdrf/data.hpp"
#include "rdrf/footprint.hpp"
#include "rdrf/fusion.hpp"
#include "rdrf/lfe.hpp"
#include "rdrf/loss.hpp"
#include "rdrf/metrics.hpp"
#include "rdrf/model.hpp"
#include "rdrf/ops.hpp"
#include "rdrf/params.hpp"
#include "rdrf/probe.hpp"
#include "rdrf/propagation.hpp"
#include "rdrf/tensor.hpp"
#include "rdrf/train.hpp"
#include "rdrf/verify.hpp"
