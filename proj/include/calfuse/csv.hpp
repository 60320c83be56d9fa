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

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace calfuse {

/// RFC 4180 table: quoted fields may contain commas, quotes ("") and newlines.
struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line where each row starts

  /// Column index, or -1 when absent.
  int column(std::string_view name) const;
  /// "<source> row <n> (line <l>)" for error messages; n is 1-based.
  std::string where(std::size_t row) const;
};

/// Throws ValidationError on unterminated quotes or rows whose field count
/// differs from the header. Blank lines are skipped; a UTF-8 BOM is ignored.
CsvTable parse_csv(std::string_view text, const std::string& source = "<memory>");
CsvTable read_csv_file(const std::string& path);

std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
/// Whole-field parse; throws ValidationError mentioning `context` otherwise.
double parse_double(std::string_view s, const std::string& context);
long parse_long(std::string_view s, const std::string& context);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace calfuse
