/*
 * Copyright 2026 The SCAR Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "scar/bench.hpp"
#include "scar/cluster.hpp"
#include "scar/engine.hpp"
#include "scar/epoch.hpp"
#include "scar/metrics.hpp"
#include "scar/oracle.hpp"
#include "scar/socket_transport.hpp"
#include "scar/storage.hpp"
#include "scar/timestamps.hpp"
#include "scar/transport.hpp"
#include "scar/types.hpp"
#include "scar/wire.hpp"
#include "scar/workloads.hpp"
