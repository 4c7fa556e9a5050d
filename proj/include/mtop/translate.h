#ifndef MTOP_TRANSLATE_H_
#define MTOP_TRANSLATE_H_

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include "mtop/error.h"

namespace mtop {

enum class TranslateErrc {
  kBackendUnavailable,
  kCacheMiss,
  kQuotaExceeded,
  kInvalidRequest,
  kIo,
};

const char* to_string(TranslateErrc kind);

using TranslateError = KindedError<TranslateErrc>;

struct TranslationRequest {
  std::vector<std::string> sentences;
  std::string source_lang;
  std::string target_lang;

  void validate() const;
};

class TranslationBackend {
 public:
  virtual ~TranslationBackend() = default;

  // One backend invocation; the output has the input's length and order.
  std::vector<std::string> translate(const std::vector<std::string>& sentences,
                                     const std::string& source_lang,
                                     const std::string& target_lang);

  virtual std::string name() const = 0;
  // Largest number of sentences accepted in a single call.
  virtual size_t max_batch() const { return 1000; }

  size_t calls() const { return calls_.load(); }

 protected:
  virtual std::vector<std::string> do_translate(const std::vector<std::string>& sentences,
                                                const std::string& source_lang,
                                                const std::string& target_lang) = 0;

 private:
  std::atomic<size_t> calls_{0};
};

// Returns every sentence unchanged.
class IdentityBackend : public TranslationBackend {
 public:
  std::string name() const override { return "identity"; }

 protected:
  std::vector<std::string> do_translate(const std::vector<std::string>& sentences,
                                        const std::string&, const std::string&) override;
};

// Word-by-word substitution through a lexicon. Lookups are case-insensitive
// (ASCII); unknown words pass through unchanged.
class DictBackend : public TranslationBackend {
 public:
  explicit DictBackend(std::map<std::string, std::string> lexicon);
  // Lexicon file: "src_word \t tgt_phrase" per line.
  static std::unique_ptr<DictBackend> from_file(const std::filesystem::path& path);

  std::string name() const override { return "dict"; }

 protected:
  std::vector<std::string> do_translate(const std::vector<std::string>& sentences,
                                        const std::string&, const std::string&) override;

 private:
  std::map<std::string, std::string> lexicon_;
};

// Replays translations from a TSV file ("sentence \t translation", or the
// four-column cache layout). A sentence missing from the file is a CacheMiss.
class FileBackend : public TranslationBackend {
 public:
  explicit FileBackend(const std::filesystem::path& path);
  FileBackend(std::map<std::string, std::string> table) : table_(std::move(table)) {}

  std::string name() const override { return "file"; }

 protected:
  std::vector<std::string> do_translate(const std::vector<std::string>& sentences,
                                        const std::string&, const std::string&) override;

 private:
  std::map<std::string, std::string> table_;
};

struct HttpBackendOptions {
  std::string endpoint;  // e.g. "http://localhost:8080/translate"
  std::string api_key;
  size_t max_batch = 50;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{30};

  // Reads MT_ENDPOINT and MT_API_KEY.
  static HttpBackendOptions from_env();
};

// POST {source_lang, target_lang, sentences[]} -> {translations[]}.
// Connection failures and 5xx responses are retried with exponential
// backoff; HTTP 429 raises QuotaExceeded.
class HttpBackend : public TranslationBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  std::string name() const override { return "http"; }
  size_t max_batch() const override { return options_.max_batch; }
  size_t http_requests() const { return http_requests_.load(); }

 protected:
  std::vector<std::string> do_translate(const std::vector<std::string>& sentences,
                                        const std::string& source_lang,
                                        const std::string& target_lang) override;

 private:
  HttpBackendOptions options_;
  std::string scheme_host_port_;
  std::string path_;
  std::atomic<size_t> http_requests_{0};
};

// Append-only TSV: "source_lang \t target_lang \t sentence \t translation".
// Loaded fully on construction; writes are serialized, reads may run
// concurrently.
class TranslationCache {
 public:
  TranslationCache() = default;  // in-memory only
  explicit TranslationCache(std::filesystem::path path);

  std::optional<std::string> lookup(const std::string& source_lang,
                                    const std::string& target_lang,
                                    const std::string& sentence) const;
  void insert(const std::string& source_lang, const std::string& target_lang,
              const std::string& sentence, const std::string& translation);
  size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;

  std::filesystem::path path_;
  std::map<Key, std::string> entries_;
  mutable std::shared_mutex mutex_;
};

std::string escape_tsv_field(const std::string& field);
std::string unescape_tsv_field(const std::string& field);

// Translates with write-through caching. Cache hits never reach the backend;
// misses are deduplicated and sent in chunks of backend.max_batch().
std::vector<std::string> translate_batch(TranslationBackend& backend,
                                         const TranslationRequest& request,
                                         TranslationCache* cache = nullptr);

// Builds a backend by name: identity, dict (needs lexicon), file (needs
// table path) or http (environment).
std::unique_ptr<TranslationBackend> make_backend(const std::string& name,
                                                 const std::filesystem::path& resource);

}  // namespace mtop

#endif  // MTOP_TRANSLATE_H_
