/*
 * Copyright 2026 The ConvPS Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CONVPS_TEXT_H_
#define CONVPS_TEXT_H_

#include <string>
#include <string_view>
#include <vector>

namespace convps {

// Lowercases and splits on every run of non-alphanumeric ASCII characters.
// Bytes >= 0x80 are treated as alphanumeric so UTF-8 words stay intact.
std::vector<std::string> Tokenize(std::string_view text);

std::string ToLower(std::string_view text);

}  // namespace convps

#endif  // CONVPS_TEXT_H_
