#include "relsim/importers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <optional>

#include <json.hpp>

#include "relsim/config.hpp"
#include "relsim/data.hpp"
#include "relsim/error.hpp"

namespace relsim {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string at(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line) + ": "; }

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

// One CSV record on a single line; doubled quotes escape a quote.
std::vector<std::string> split_csv(const std::string& line, const std::string& where) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw DataError(where + "unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

double parse_score(const std::string& text, const std::string& where, const std::string& column) {
  const std::string t = trim(text);
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (first != last && *first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw DataError(where + column + ": '" + text + "' is not a number");
  }
  return v;
}

// Index of each required column in a header, case-insensitively, trying
// aliases in order.
std::vector<std::size_t> locate(const std::vector<std::string>& header,
                                 const std::vector<std::vector<std::string>>& wanted, const std::string& where) {
  std::vector<std::size_t> idx;
  for (const auto& aliases : wanted) {
    std::optional<std::size_t> found;
    for (const auto& name : aliases) {
      for (std::size_t i = 0; i < header.size() && !found; ++i) {
        if (lower(trim(header[i])) == lower(name)) found = i;
      }
      if (found) break;
    }
    if (!found) throw DataError(where + "missing column " + aliases.front());
    idx.push_back(*found);
  }
  return idx;
}

PairExample pair_from_text(const std::string& left, const std::string& right) {
  PairExample ex;
  ex.left = tokenize(left);
  ex.right = tokenize(right);
  return ex;
}

std::size_t import_generic(std::istream& in, std::ostream& out, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t columns = 0;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (columns == 0) {
      const auto header = split_on(line, '\t');
      if (header.size() < 3 || header[0] != "sent1" || header[1] != "sent2") {
        throw DataError(at(source, lineno) + "header must start with sent1, sent2 and name at least one relation");
      }
      columns = header.size();
      out << line << '\n';
      continue;
    }
    if (blank(line)) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != columns) {
      throw DataError(at(source, lineno) + "expected " + std::to_string(columns) + " columns, found " +
                      std::to_string(cols.size()));
    }
    for (std::size_t c = 0; c < columns; ++c) {
      if (blank(cols[c])) throw DataError(at(source, lineno) + "column " + std::to_string(c + 1) + " is empty");
    }
    out << line << '\n';
    ++count;
  }
  if (columns == 0) out << "sent1\tsent2\n";
  return count;
}

std::size_t import_sick(std::istream& in, std::ostream& out, const std::string& source) {
  const auto specs = preset_relations("sick");
  std::vector<PairExample> rows;
  std::vector<std::size_t> idx;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    const std::string where = at(source, lineno);
    if (idx.empty()) {
      idx = locate(split_on(line, '\t'),
                   {{"sentence_A"}, {"sentence_B"}, {"relatedness_score"}, {"entailment_judgment"}}, where);
      continue;
    }
    if (blank(line)) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() <= *std::max_element(idx.begin(), idx.end())) throw DataError(where + "too few columns");
    PairExample ex = pair_from_text(cols[idx[0]], cols[idx[1]]);
    ex.labels["relatedness"] = parse_score(cols[idx[2]], where, "relatedness_score");
    ex.labels["entailment"] = lower(trim(cols[idx[3]]));
    validate_example(ex, specs, where.substr(0, where.size() - 2));
    rows.push_back(std::move(ex));
  }
  write_pairs_tsv(out, rows, specs);
  return rows.size();
}

std::size_t import_activity(std::istream& in, std::ostream& out, const std::string& source) {
  const auto specs = preset_relations("activity");
  std::vector<PairExample> rows;
  std::vector<std::size_t> idx;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    const std::string where = at(source, lineno);
    if (idx.empty()) {
      idx = locate(split_csv(line, where),
                   {{"phrase1", "sent1", "activity1"}, {"phrase2", "sent2", "activity2"}, {"SIM"}, {"REL"}, {"MA"},
                    {"PAC"}},
                   where);
      continue;
    }
    if (blank(line)) continue;
    const auto cols = split_csv(line, where);
    if (cols.size() <= *std::max_element(idx.begin(), idx.end())) throw DataError(where + "too few columns");
    PairExample ex = pair_from_text(cols[idx[0]], cols[idx[1]]);
    for (std::size_t r = 0; r < specs.size(); ++r) {
      ex.labels[specs[r].name] = parse_score(cols[idx[r + 2]], where, specs[r].name);
    }
    validate_example(ex, specs, where.substr(0, where.size() - 2));
    rows.push_back(std::move(ex));
  }
  write_pairs_tsv(out, rows, specs);
  return rows.size();
}

std::string item_text(const ordered_json& item, const std::string& key, const std::string& where) {
  if (!item.is_object()) throw DataError(where + key + " must be an object of metadata fields");
  std::vector<std::pair<std::string, std::string>> fields;
  for (const auto& [name, value] : item.items()) {
    if (value.is_null()) continue;
    if (!value.is_string()) throw DataError(where + key + "." + name + " must be a string");
    fields.emplace_back(name, value.get<std::string>());
  }
  return concat_metadata(fields);
}

std::size_t import_typed(std::istream& in, std::ostream& out, const std::string& source) {
  const auto specs = preset_relations("typed");
  std::vector<PairExample> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (blank(line)) continue;
    const std::string where = at(source, lineno);
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "invalid JSON (" + e.what() + ")");
    }
    if (!rec.is_object() || !rec.contains("item1") || !rec.contains("item2") || !rec.contains("scores")) {
      throw DataError(where + "expected an object with item1, item2 and scores");
    }
    PairExample ex = pair_from_text(item_text(rec["item1"], "item1", where), item_text(rec["item2"], "item2", where));
    const auto& scores = rec["scores"];
    if (!scores.is_object()) throw DataError(where + "scores must be an object");
    for (const auto& spec : specs) {
      if (!scores.contains(spec.name) || !scores[spec.name].is_number()) {
        throw DataError(where + "missing numeric score for " + spec.name);
      }
      ex.labels[spec.name] = scores[spec.name].get<double>();
    }
    validate_example(ex, specs, where.substr(0, where.size() - 2));
    rows.push_back(std::move(ex));
  }
  write_pairs_tsv(out, rows, specs);
  return rows.size();
}

}  // namespace

ImportFormat parse_import_format(const std::string& tag) {
  if (tag == "generic") return ImportFormat::generic;
  if (tag == "sick") return ImportFormat::sick;
  if (tag == "activity") return ImportFormat::activity;
  if (tag == "typed") return ImportFormat::typed;
  throw ConfigError("unknown import format '" + tag + "' (expected activity, sick, typed or generic)");
}

std::size_t import_pairs(ImportFormat format, std::istream& in, std::ostream& out, const std::string& source) {
  switch (format) {
    case ImportFormat::generic: return import_generic(in, out, source);
    case ImportFormat::sick: return import_sick(in, out, source);
    case ImportFormat::activity: return import_activity(in, out, source);
    case ImportFormat::typed: return import_typed(in, out, source);
  }
  return 0;
}

std::size_t import_file(const std::string& format, const std::filesystem::path& input,
                        const std::filesystem::path& output) {
  const ImportFormat f = parse_import_format(format);
  std::ifstream in(input, std::ios::binary);
  if (!in) throw DataError("cannot open " + input.string());
  std::ostringstream buffer;
  const std::size_t n = import_pairs(f, in, buffer, input.string());
  if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
  std::ofstream out(output, std::ios::binary);
  if (!out) throw DataError("cannot write " + output.string());
  out << buffer.str();
  return n;
}

}  // namespace relsim
