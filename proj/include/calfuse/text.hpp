// Copyright (c) 2026 The calfuse Authors. All Rights Reserved.
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

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace calfuse {

/// Lowercases ASCII letters and splits on whitespace and punctuation.
/// Apostrophes inside a word are kept ("don't" is one token); bytes >= 0x80
/// are treated as word characters so UTF-8 words stay intact.
std::vector<std::string> tokenize(std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s);

/// Bucket 0 is reserved for the null token that stands in for empty texts;
/// words hash into [1, vocab_size).
inline constexpr std::size_t kNullToken = 0;

std::size_t token_bucket(std::string_view token, std::size_t vocab_size);

/// Token ids for a text; a text with no tokens maps to {kNullToken}.
std::vector<std::size_t> token_ids(std::string_view text, std::size_t vocab_size);

}  // namespace calfuse
