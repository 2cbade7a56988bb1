#pragma once

// Conversion of source corpora to the canonical pair TSV.
//
//   generic   canonical TSV; rows are checked and copied unchanged
//   sick      tab-separated with columns pair_ID, sentence_A, sentence_B,
//             relatedness_score, entailment_judgment (any order, extra
//             columns ignored)
//   activity  CSV with columns phrase1, phrase2, SIM, REL, MA, PAC
//   typed     JSON lines: {"item1": {field: text}, "item2": {...},
//             "scores": {relation: value}}; item fields are joined with
//             concat_metadata

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace relsim {

enum class ImportFormat { generic, sick, activity, typed };

ImportFormat parse_import_format(const std::string& tag);

// Returns the number of pairs written. Malformed rows raise DataError with
// "source:line:" prefixes.
std::size_t import_pairs(ImportFormat format, std::istream& in, std::ostream& out,
                         const std::string& source = "<input>");

std::size_t import_file(const std::string& format, const std::filesystem::path& input,
                        const std::filesystem::path& output);

}  // namespace relsim
