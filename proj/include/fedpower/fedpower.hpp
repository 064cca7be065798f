// Copyright 2026 The FedPower Authors
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

#ifndef FEDPOWER_FEDPOWER_HPP_
#define FEDPOWER_FEDPOWER_HPP_

#include "fedpower/accountant.hpp"
#include "fedpower/attacks.hpp"
#include "fedpower/config.hpp"
#include "fedpower/dp.hpp"
#include "fedpower/errors.hpp"
#include "fedpower/factorize.hpp"
#include "fedpower/fl.hpp"
#include "fedpower/fpmx.hpp"
#include "fedpower/harness.hpp"
#include "fedpower/linalg.hpp"
#include "fedpower/rng.hpp"
#include "fedpower/task.hpp"

#endif  // FEDPOWER_FEDPOWER_HPP_
