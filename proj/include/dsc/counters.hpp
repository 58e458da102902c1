/* dsc - deep sparse Conformer encoder blocks.
 * Copyright (C) 2026 the dsc authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DSC_COUNTERS_HPP_
#define DSC_COUNTERS_HPP_

#include <cstdint>

namespace dsc {

/// Exact operation counters for the attention complexity checks.
///
/// mac_count counts scalar multiply-accumulates in the attention score,
/// measure, and value products only (one multiply plus one add = 2), never
/// the linear projections. peak_elements tracks the largest number of
/// simultaneously live tensor elements in attention scratch buffers,
/// maintained by explicit track_alloc/track_free calls at buffer lifetimes.
/// Both are monotone non-decreasing within one forward call.
struct OpCounters {
  std::uint64_t mac_count = 0;
  std::uint64_t peak_elements = 0;
  std::uint64_t live_elements = 0;

  void add_macs(std::uint64_t n) { mac_count += n; }

  void track_alloc(std::uint64_t elems) {
    live_elements += elems;
    if (live_elements > peak_elements) peak_elements = live_elements;
  }

  void track_free(std::uint64_t elems) {
    live_elements = elems > live_elements ? 0 : live_elements - elems;
  }
};

}  // namespace dsc

#endif  // DSC_COUNTERS_HPP_
