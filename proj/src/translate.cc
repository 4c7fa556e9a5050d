#include "mtop/translate.h"

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "mtop/utf8.h"

namespace mtop {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TranslateError(TranslateErrc::kIo, "cannot open " + path.string());
  std::string line;
  size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(line, number);
  }
}

}  // namespace

const char* to_string(TranslateErrc kind) {
  switch (kind) {
    case TranslateErrc::kBackendUnavailable: return "BackendUnavailable";
    case TranslateErrc::kCacheMiss: return "CacheMiss";
    case TranslateErrc::kQuotaExceeded: return "QuotaExceeded";
    case TranslateErrc::kInvalidRequest: return "InvalidRequest";
    case TranslateErrc::kIo: return "IoError";
  }
  return "Unknown";
}

void TranslationRequest::validate() const {
  if (sentences.empty()) {
    throw TranslateError(TranslateErrc::kInvalidRequest, "no sentences to translate");
  }
  if (source_lang.empty() || target_lang.empty() || source_lang == target_lang) {
    throw TranslateError(TranslateErrc::kInvalidRequest,
                         "source and target languages must be set and distinct");
  }
}

std::vector<std::string> TranslationBackend::translate(
    const std::vector<std::string>& sentences, const std::string& source_lang,
    const std::string& target_lang) {
  ++calls_;
  std::vector<std::string> out = do_translate(sentences, source_lang, target_lang);
  if (out.size() != sentences.size()) {
    throw TranslateError(TranslateErrc::kBackendUnavailable,
                         name() + " backend returned " + std::to_string(out.size()) +
                             " translations for " + std::to_string(sentences.size()) +
                             " sentences");
  }
  return out;
}

std::vector<std::string> IdentityBackend::do_translate(
    const std::vector<std::string>& sentences, const std::string&, const std::string&) {
  return sentences;
}

DictBackend::DictBackend(std::map<std::string, std::string> lexicon) {
  for (auto& [src, tgt] : lexicon) lexicon_[utf8::to_lower_ascii(src)] = std::move(tgt);
}

std::unique_ptr<DictBackend> DictBackend::from_file(const std::filesystem::path& path) {
  std::map<std::string, std::string> lexicon;
  for_each_line(path, [&](const std::string& line, size_t number) {
    std::vector<std::string> fields = split_fields(line);
    if (fields.size() != 2 || fields[0].empty()) {
      throw TranslateError(TranslateErrc::kIo, path.string() + ":" + std::to_string(number) +
                                                   ": expected 'src_word<TAB>tgt_phrase'");
    }
    lexicon[fields[0]] = fields[1];
  });
  return std::make_unique<DictBackend>(std::move(lexicon));
}

std::vector<std::string> DictBackend::do_translate(const std::vector<std::string>& sentences,
                                                   const std::string&, const std::string&) {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const std::string& sentence : sentences) {
    std::istringstream words(sentence);
    std::string word, translated;
    while (words >> word) {
      auto it = lexicon_.find(utf8::to_lower_ascii(word));
      if (!translated.empty()) translated.push_back(' ');
      translated += it == lexicon_.end() ? word : it->second;
    }
    out.push_back(std::move(translated));
  }
  return out;
}

FileBackend::FileBackend(const std::filesystem::path& path) {
  for_each_line(path, [&](const std::string& line, size_t number) {
    std::vector<std::string> fields = split_fields(line);
    if (fields.size() == 2) {
      table_[unescape_tsv_field(fields[0])] = unescape_tsv_field(fields[1]);
    } else if (fields.size() == 4) {
      table_[unescape_tsv_field(fields[2])] = unescape_tsv_field(fields[3]);
    } else {
      throw TranslateError(TranslateErrc::kIo,
                           path.string() + ":" + std::to_string(number) +
                               ": expected 2 or 4 tab-separated fields");
    }
  });
}

std::vector<std::string> FileBackend::do_translate(const std::vector<std::string>& sentences,
                                                   const std::string&, const std::string&) {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const std::string& sentence : sentences) {
    auto it = table_.find(sentence);
    if (it == table_.end()) {
      throw TranslateError(TranslateErrc::kCacheMiss, "no translation for '" + sentence + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

HttpBackendOptions HttpBackendOptions::from_env() {
  HttpBackendOptions options;
  if (const char* endpoint = std::getenv("MT_ENDPOINT")) options.endpoint = endpoint;
  if (const char* key = std::getenv("MT_API_KEY")) options.api_key = key;
  return options;
}

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  const std::string& url = options_.endpoint;
  size_t scheme_end = url.find("://");
  if (url.empty() || scheme_end == std::string::npos) {
    throw TranslateError(TranslateErrc::kInvalidRequest,
                         "MT endpoint must be an absolute http(s) URL, got '" + url + "'");
  }
  size_t path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (options_.max_batch == 0) options_.max_batch = 1;
}

std::vector<std::string> HttpBackend::do_translate(const std::vector<std::string>& sentences,
                                                   const std::string& source_lang,
                                                   const std::string& target_lang) {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  }
  for (size_t begin = 0; begin < sentences.size(); begin += options_.max_batch) {
    size_t end = std::min(sentences.size(), begin + options_.max_batch);
    nlohmann::json body;
    body["source_lang"] = source_lang;
    body["target_lang"] = target_lang;
    body["sentences"] = std::vector<std::string>(sentences.begin() + begin,
                                                 sentences.begin() + end);
    const std::string payload = body.dump();
    std::string last_error;
    bool done = false;
    auto backoff = options_.initial_backoff;
    for (int attempt = 0; attempt <= options_.max_retries && !done; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      ++http_requests_;
      httplib::Result result = client.Post(path_, headers, payload, "application/json");
      if (!result) {
        last_error = "connection failed: " + httplib::to_string(result.error());
        continue;
      }
      if (result->status == 429) {
        throw TranslateError(TranslateErrc::kQuotaExceeded, "MT service quota exceeded");
      }
      if (result->status >= 500) {
        last_error = "HTTP " + std::to_string(result->status);
        continue;
      }
      if (result->status != 200) {
        throw TranslateError(TranslateErrc::kBackendUnavailable,
                             "MT service returned HTTP " + std::to_string(result->status));
      }
      try {
        auto reply = nlohmann::json::parse(result->body);
        auto translations = reply.at("translations").get<std::vector<std::string>>();
        if (translations.size() != end - begin) {
          throw TranslateError(TranslateErrc::kBackendUnavailable,
                               "MT service returned a translation count mismatch");
        }
        for (auto& t : translations) out.push_back(std::move(t));
      } catch (const nlohmann::json::exception& e) {
        throw TranslateError(TranslateErrc::kBackendUnavailable,
                             std::string("malformed MT response: ") + e.what());
      }
      done = true;
    }
    if (!done) {
      throw TranslateError(TranslateErrc::kBackendUnavailable,
                           "MT service unavailable after " +
                               std::to_string(options_.max_retries) + " retries (" +
                               last_error + ")");
    }
  }
  return out;
}

std::string escape_tsv_field(const std::string& field) {
  std::string out;
  out.reserve(field.size());
  for (char c : field) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_tsv_field(const std::string& field) {
  std::string out;
  out.reserve(field.size());
  for (size_t i = 0; i < field.size(); ++i) {
    if (field[i] != '\\' || i + 1 == field.size()) {
      out.push_back(field[i]);
      continue;
    }
    char next = field[++i];
    switch (next) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: out.push_back(next);
    }
  }
  return out;
}

TranslationCache::TranslationCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  for_each_line(path_, [&](const std::string& line, size_t number) {
    std::vector<std::string> f = split_fields(line);
    if (f.size() != 4) {
      throw TranslateError(TranslateErrc::kIo, path_.string() + ":" + std::to_string(number) +
                                                   ": expected 4 tab-separated fields");
    }
    entries_[{f[0], f[1], unescape_tsv_field(f[2])}] = unescape_tsv_field(f[3]);
  });
}

std::optional<std::string> TranslationCache::lookup(const std::string& source_lang,
                                                    const std::string& target_lang,
                                                    const std::string& sentence) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find({source_lang, target_lang, sentence});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void TranslationCache::insert(const std::string& source_lang, const std::string& target_lang,
                              const std::string& sentence, const std::string& translation) {
  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.emplace(Key{source_lang, target_lang, sentence}, translation);
  if (!inserted) return;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw TranslateError(TranslateErrc::kIo, "cannot append to " + path_.string());
  out << source_lang << '\t' << target_lang << '\t' << escape_tsv_field(sentence) << '\t'
      << escape_tsv_field(translation) << '\n';
}

size_t TranslationCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::vector<std::string> translate_batch(TranslationBackend& backend,
                                         const TranslationRequest& request,
                                         TranslationCache* cache) {
  request.validate();
  const std::string& src = request.source_lang;
  const std::string& tgt = request.target_lang;
  std::map<std::string, std::string> resolved;
  std::vector<std::string> misses;
  std::set<std::string> pending;
  for (const std::string& sentence : request.sentences) {
    if (resolved.count(sentence) || pending.count(sentence)) continue;
    if (cache != nullptr) {
      if (auto hit = cache->lookup(src, tgt, sentence)) {
        resolved[sentence] = *hit;
        continue;
      }
    }
    pending.insert(sentence);
    misses.push_back(sentence);
  }
  const size_t chunk = std::max<size_t>(1, backend.max_batch());
  for (size_t begin = 0; begin < misses.size(); begin += chunk) {
    std::vector<std::string> batch(misses.begin() + begin,
                                   misses.begin() + std::min(misses.size(), begin + chunk));
    std::vector<std::string> translations = backend.translate(batch, src, tgt);
    for (size_t i = 0; i < batch.size(); ++i) {
      if (cache != nullptr) cache->insert(src, tgt, batch[i], translations[i]);
      resolved[batch[i]] = translations[i];
    }
  }
  std::vector<std::string> out;
  out.reserve(request.sentences.size());
  for (const std::string& sentence : request.sentences) out.push_back(resolved.at(sentence));
  return out;
}

std::unique_ptr<TranslationBackend> make_backend(const std::string& name,
                                                 const std::filesystem::path& resource) {
  if (name == "identity") return std::make_unique<IdentityBackend>();
  if (name == "dict") {
    if (resource.empty()) {
      throw TranslateError(TranslateErrc::kInvalidRequest, "dict backend needs a lexicon file");
    }
    return DictBackend::from_file(resource);
  }
  if (name == "file") {
    if (resource.empty()) {
      throw TranslateError(TranslateErrc::kInvalidRequest, "file backend needs a table file");
    }
    return std::make_unique<FileBackend>(resource);
  }
  if (name == "http") return std::make_unique<HttpBackend>(HttpBackendOptions::from_env());
  throw TranslateError(TranslateErrc::kInvalidRequest, "unknown backend '" + name + "'");
}

}  // namespace mtop
