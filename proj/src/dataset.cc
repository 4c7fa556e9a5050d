#include "mtop/dataset.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mtop/utf8.h"

namespace mtop {
namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    out.emplace_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

bool uses_elision(std::string_view lang) {
  return lang == "it" || lang == "fr" || lang == "ca";
}

bool is_trailing_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

enum class JaClass { kKatakana, kRun, kSingle };

JaClass classify(char32_t cp) {
  if ((cp >= 0x30A0 && cp <= 0x30FF) || (cp >= 0x31F0 && cp <= 0x31FF) ||
      (cp >= 0xFF66 && cp <= 0xFF9F)) {
    return JaClass::kKatakana;
  }
  if ((cp >= 0x3040 && cp <= 0x309F) || (cp >= 0x3400 && cp <= 0x4DBF) ||
      (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0xF900 && cp <= 0xFAFF) ||
      (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF01 && cp <= 0xFF0F) ||
      (cp >= 0xFF1A && cp <= 0xFF20)) {
    return JaClass::kSingle;
  }
  if (cp < 0x80 && (std::ispunct(static_cast<int>(cp)) != 0)) {
    return JaClass::kSingle;
  }
  return JaClass::kRun;
}

std::vector<std::string> segment_japanese(std::string_view chunk) {
  std::vector<std::string> out;
  std::string current;
  JaClass current_class = JaClass::kSingle;
  size_t pos = 0;
  while (pos < chunk.size()) {
    char32_t cp;
    size_t len = utf8::decode(chunk, pos, &cp);
    std::string_view ch = chunk.substr(pos, len);
    pos += len;
    JaClass cls = classify(cp);
    if (cls == JaClass::kSingle) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      out.emplace_back(ch);
      continue;
    }
    if (!current.empty() && cls != current_class) {
      out.push_back(std::move(current));
      current.clear();
    }
    current_class = cls;
    current.append(ch);
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

void detach_trailing_punct(std::string token, std::vector<std::string>* out) {
  size_t end = token.size();
  while (end > 1 && is_trailing_punct(token[end - 1])) --end;
  if (end == token.size()) {
    out->push_back(std::move(token));
    return;
  }
  std::string tail = token.substr(end);
  token.resize(end);
  out->push_back(std::move(token));
  for (char c : tail) out->emplace_back(1, c);
}

ordered_json example_to_json(const Example& ex) {
  ordered_json record;
  record["id"] = ex.id;
  record["lang"] = ex.lang;
  record["question_tokens"] = ex.question_tokens;
  record["mrl"] = serialize_mrl(ex.mrl);
  record["provenance"] = to_string(ex.provenance);
  ordered_json meta = ordered_json::object();
  for (const auto& [k, v] : ex.meta) meta[k] = v;
  record["meta"] = std::move(meta);
  return record;
}

[[noreturn]] void record_error(std::string_view source, size_t line,
                               const std::string& what) {
  throw DatasetError(DatasetErrc::kMalformedRecord,
                     std::string(source) + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

const char* to_string(DatasetErrc kind) {
  switch (kind) {
    case DatasetErrc::kIo: return "IoError";
    case DatasetErrc::kMalformedRow: return "MalformedRow";
    case DatasetErrc::kMalformedRecord: return "MalformedRecord";
    case DatasetErrc::kSchemaVersionMismatch: return "SchemaVersionMismatch";
    case DatasetErrc::kDuplicateId: return "DuplicateId";
    case DatasetErrc::kInvalidExample: return "InvalidExample";
  }
  return "Unknown";
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kHuman: return "human";
    case Provenance::kMachineTranslated: return "machine_translated";
    case Provenance::kSynthetic: return "synthetic";
  }
  return "human";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "human") return Provenance::kHuman;
  if (s == "machine_translated") return Provenance::kMachineTranslated;
  if (s == "synthetic") return Provenance::kSynthetic;
  throw DatasetError(DatasetErrc::kMalformedRecord,
                     "unknown provenance '" + std::string(s) + "'");
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev" || s == "eval" || s == "valid") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw DatasetError(DatasetErrc::kMalformedRecord,
                     "unknown split '" + std::string(s) + "'");
}

std::map<std::string, size_t> Corpus::counts_by_lang() const {
  std::map<std::string, size_t> counts;
  for (const Example& ex : examples) ++counts[ex.lang];
  return counts;
}

std::vector<std::string> Corpus::langs() const {
  std::vector<std::string> out;
  for (const auto& [lang, count] : counts_by_lang()) out.push_back(lang);
  return out;
}

std::string IngestReport::to_json() const {
  ordered_json j;
  j["read"] = read;
  j["kept"] = kept;
  j["dropped_unsupported"] = dropped_unsupported;
  j["malformed"] = malformed;
  return j.dump();
}

std::vector<std::string> split_elision(std::string_view token) {
  // Elided prefixes are short runs of ASCII letters followed by an apostrophe.
  constexpr size_t kMaxPrefix = 6;
  for (size_t i = 1; i < token.size() && i <= kMaxPrefix; ++i) {
    char c = token[i - 1];
    bool letter = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (!letter) break;
    size_t apos_len = 0;
    if (token[i] == '\'') {
      apos_len = 1;
    } else if (token.substr(i, 3) == "’") {
      apos_len = 3;
    }
    if (apos_len > 0) {
      size_t cut = i + apos_len;
      if (cut >= token.size()) break;
      return {std::string(token.substr(0, cut)), std::string(token.substr(cut))};
    }
  }
  return {std::string(token)};
}

std::vector<std::string> tokenize_question(std::string_view text,
                                           std::string_view lang) {
  std::vector<std::string> chunks = split_whitespace(text);
  if (lang == "ja" && chunks.size() == 1) {
    chunks = segment_japanese(chunks.front());
  }
  std::vector<std::string> tokens;
  for (std::string& chunk : chunks) {
    std::vector<std::string> pieces;
    detach_trailing_punct(std::move(chunk), &pieces);
    for (std::string& piece : pieces) {
      if (uses_elision(lang)) {
        for (std::string& part : split_elision(piece)) tokens.push_back(std::move(part));
      } else {
        tokens.push_back(std::move(piece));
      }
    }
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

void validate_example(const Example& example) {
  if (example.question_tokens.empty()) {
    throw DatasetError(DatasetErrc::kInvalidExample,
                       example.id + ": empty question");
  }
  const auto& q = example.question_tokens;
  for (const MrlNode* leaf : leaf_nodes(example.mrl)) {
    auto it = std::search(q.begin(), q.end(), leaf->text.begin(), leaf->text.end());
    if (it == q.end()) {
      throw DatasetError(DatasetErrc::kInvalidExample,
                         example.id + ": leaf '" + join_tokens(leaf->text) +
                             "' is not a span of the question");
    }
  }
}

Corpus ingest_top_tsv(std::istream& in, Split split, IngestReport* report,
                      IngestOptions options, std::string_view source_name) {
  Corpus corpus;
  corpus.split = split;
  IngestReport local;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++local.read;
    std::string where = std::string(source_name) + ":" + std::to_string(line_number);
    std::vector<std::string> columns = split_tabs(line);
    try {
      if (columns.size() != 3) {
        throw DatasetError(DatasetErrc::kMalformedRow,
                           where + ": expected 3 tab-separated columns, got " +
                               std::to_string(columns.size()));
      }
      std::optional<MrlTree> tree;
      try {
        tree = adapt_top_annotation(columns[2]);
      } catch (const MrlError& e) {
        throw MrlError(e.kind(), where + ": " + e.what());
      }
      if (!tree) {
        ++local.dropped_unsupported;
        continue;
      }
      Example ex;
      ex.id = std::string(to_string(split)) + "-" + std::to_string(line_number);
      ex.lang = "en";
      ex.question_tokens = split_whitespace(columns[1]);
      if (ex.question_tokens.empty()) {
        throw DatasetError(DatasetErrc::kMalformedRow, where + ": empty question");
      }
      ex.mrl = std::move(*tree);
      ex.provenance = Provenance::kHuman;
      corpus.examples.push_back(std::move(ex));
      ++local.kept;
    } catch (const Error&) {
      if (!options.skip_malformed) throw;
      ++local.malformed;
    }
  }
  if (report != nullptr) *report = local;
  return corpus;
}

Corpus ingest_top_tsv(const std::filesystem::path& path, Split split,
                      IngestReport* report, IngestOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DatasetError(DatasetErrc::kIo, "cannot open " + path.string());
  }
  return ingest_top_tsv(in, split, report, options, path.string());
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  ordered_json header;
  header["format"] = "mtop-corpus";
  header["schema_version"] = kCorpusSchemaVersion;
  header["split"] = to_string(corpus.split);
  out << header.dump() << '\n';
  for (const Example& ex : corpus.examples) {
    out << example_to_json(ex).dump() << '\n';
  }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError(DatasetErrc::kIo, "cannot write " + path.string());
  write_corpus(corpus, out);
  if (!out) throw DatasetError(DatasetErrc::kIo, "write failed: " + path.string());
}

Corpus read_corpus(std::istream& in, std::string_view source_name) {
  Corpus corpus;
  std::set<std::string> seen_ids;
  std::string line;
  size_t line_number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      record_error(source_name, line_number, e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("format", "") != "mtop-corpus") {
        record_error(source_name, line_number, "missing corpus header record");
      }
      int version = j.value("schema_version", -1);
      if (version != kCorpusSchemaVersion) {
        throw DatasetError(DatasetErrc::kSchemaVersionMismatch,
                           std::string(source_name) + ": schema_version " +
                               std::to_string(version) + ", expected " +
                               std::to_string(kCorpusSchemaVersion));
      }
      corpus.split = split_from_string(j.value("split", "train"));
      have_header = true;
      continue;
    }
    Example ex;
    try {
      ex.id = j.at("id").get<std::string>();
      ex.lang = j.at("lang").get<std::string>();
      ex.question_tokens = j.at("question_tokens").get<std::vector<std::string>>();
      ex.provenance = provenance_from_string(j.at("provenance").get<std::string>());
      const ordered_json meta = j.value("meta", ordered_json::object());
      for (const auto& [k, v] : meta.items()) ex.meta[k] = v.get<std::string>();
      ex.mrl = parse_mrl(j.at("mrl").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      record_error(source_name, line_number, e.what());
    } catch (const MrlError& e) {
      throw MrlError(e.kind(), std::string(source_name) + ":" +
                                   std::to_string(line_number) + ": " + e.what());
    } catch (const DatasetError& e) {
      record_error(source_name, line_number, e.what());
    }
    if (ex.question_tokens.empty()) {
      record_error(source_name, line_number, "empty question_tokens");
    }
    if (!seen_ids.insert(ex.id).second) {
      throw DatasetError(DatasetErrc::kDuplicateId,
                         std::string(source_name) + ":" + std::to_string(line_number) +
                             ": duplicate id " + ex.id);
    }
    corpus.examples.push_back(std::move(ex));
  }
  if (!have_header) {
    throw DatasetError(DatasetErrc::kMalformedRecord,
                       std::string(source_name) + ": missing corpus header record");
  }
  return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetErrc::kIo, "cannot open " + path.string());
  return read_corpus(in, path.string());
}

}  // namespace mtop
