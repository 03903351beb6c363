// Copyright 2026 The danosim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header. Config parsing lives in scene_config.hpp (needs yaml-cpp).

#pragma once

#include "danosim/common.hpp"
#include "danosim/field.hpp"
#include "danosim/dano.hpp"
#include "danosim/contact.hpp"
#include "danosim/dynamics.hpp"
#include "danosim/diff.hpp"
#include "danosim/sysid.hpp"
#include "danosim/trajopt.hpp"
