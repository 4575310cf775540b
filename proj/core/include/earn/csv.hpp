// Copyright 2026 The EARN Authors.
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

#ifndef EARN_CSV_HPP_
#define EARN_CSV_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace earn {

// Shortest text that parses back to the same double ("%.17g").
std::string format_real(double v);

// Quotes a field when it holds a comma, quote or newline.
std::string csv_escape(std::string_view field);

// Splits one CSV record, honoring double-quoted fields.
std::vector<std::string> csv_split(std::string_view line);

}  // namespace earn

#endif  // EARN_CSV_HPP_
