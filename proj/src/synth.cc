#include "mtop/synth.h"

#include <algorithm>
#include <random>
#include <set>

#include "mtop/mrl.h"

namespace mtop::synth {
namespace {

struct SlotType {
  const char* label;
  std::vector<std::vector<std::string>> values;
};

const std::vector<SlotType>& slot_types() {
  static const std::vector<SlotType> types = {
      {"SL:CATEGORY_EVENT",
       {{"festivals"}, {"concerts"}, {"parades"}, {"fireworks"}, {"markets"}, {"plays"}}},
      {"SL:DATE_TIME",
       {{"this", "weekend"}, {"tonight"}, {"tomorrow"}, {"next", "friday"}, {"on", "sunday"}}},
      {"SL:LOCATION",
       {{"boston"}, {"paris"}, {"rome"}, {"denver"}, {"chicago"}, {"austin"}, {"downtown"}}},
      {"SL:NAME_EVENT",
       {{"beyonce"}, {"adele"}, {"coldplay"}, {"metallica"}, {"shakira"}, {"madonna"}}},
      {"SL:WEATHER_ATTRIBUTE",
       {{"sunny"}, {"rainy"}, {"cold"}, {"windy"}, {"snowy"}, {"hot"}, {"humid"}}},
  };
  return types;
}

// Template items: a plain word, or "{k}" for slot type k.
struct Template {
  const char* intent;
  std::vector<std::string> items;
};

const std::vector<Template>& templates() {
  static const std::vector<Template> list = {
      {"IN:GET_EVENT", {"any", "{0}", "{1}"}},
      {"IN:GET_EVENT", {"find", "{0}", "in", "{2}", "{1}"}},
      {"IN:GET_EVENT", {"{0}", "of", "{3}", "{1}"}},
      {"IN:GET_EVENT", {"are", "there", "{0}", "near", "{2}"}},
      {"IN:GET_EVENT", {"show", "me", "{3}", "{0}", "in", "{2}"}},
      {"IN:GET_EVENT", {"what", "{0}", "are", "in", "{2}", "{1}"}},
      {"IN:GET_WEATHER", {"will", "it", "be", "{4}", "{1}"}},
      {"IN:GET_WEATHER", {"weather", "in", "{2}", "{1}"}},
      {"IN:GET_WEATHER", {"is", "it", "{4}", "in", "{2}"}},
      {"IN:GET_WEATHER", {"what", "is", "the", "weather", "{1}"}},
      {"IN:GET_WEATHER", {"show", "me", "the", "weather", "near", "{2}"}},
  };
  return list;
}

const std::set<std::string, std::less<>>& function_words() {
  static const std::set<std::string, std::less<>> words = {
      "any", "in", "of", "are", "there", "near", "me", "what",
      "will", "it", "be", "is", "the", "on", "this"};
  return words;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

template <typename T>
const T& pick(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

}  // namespace

std::vector<std::string> grammar_vocabulary() {
  std::set<std::string> words;
  for (const Template& t : templates()) {
    for (const std::string& item : t.items) {
      if (item[0] != '{') words.insert(item);
    }
  }
  for (const SlotType& s : slot_types()) {
    for (const auto& value : s.values) words.insert(value.begin(), value.end());
  }
  return {words.begin(), words.end()};
}

std::vector<std::string> grammar_intents() { return {"IN:GET_EVENT", "IN:GET_WEATHER"}; }

std::vector<std::string> grammar_slots() {
  std::vector<std::string> out;
  for (const SlotType& s : slot_types()) out.push_back(s.label);
  return out;
}

std::vector<std::string> pseudo_words(size_t count, uint64_t seed, std::string_view consonants) {
  static const std::string vowels = "aeiou";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> c(0, consonants.size() - 1);
  std::uniform_int_distribution<size_t> v(0, vowels.size() - 1);
  std::uniform_int_distribution<int> syllables(2, 3);
  std::vector<std::string> reserved = grammar_vocabulary();
  std::set<std::string> seen(reserved.begin(), reserved.end());
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string word;
    for (int s = syllables(rng); s > 0; --s) {
      word += consonants[c(rng)];
      word += vowels[v(rng)];
    }
    if (seen.insert(word).second) out.push_back(std::move(word));
  }
  return out;
}

Corpus grammar_corpus(const GrammarOptions& options) {
  Corpus corpus;
  corpus.split = options.split;
  std::mt19937_64 rng(options.seed);
  std::vector<std::string> pool;
  if (options.open_vocabulary) {
    constexpr size_t kHalf = 400;
    std::vector<std::string> all = pseudo_words(2 * kHalf, 7919);
    size_t start = options.partition == 0 ? 0 : kHalf;
    pool.assign(all.begin() + static_cast<std::ptrdiff_t>(start),
                all.begin() + static_cast<std::ptrdiff_t>(start + kHalf));
  }
  for (size_t n = 0; n < options.count; ++n) {
    const Template& t = pick(templates(), rng);
    Example e;
    e.id = options.id_prefix + "-" + std::to_string(n);
    e.lang = options.lang;
    e.provenance = Provenance::kSynthetic;
    e.mrl.root.label = MrlLabel::parse(t.intent);
    for (const std::string& item : t.items) {
      if (item[0] != '{') {
        e.question_tokens.push_back(item);
        continue;
      }
      const SlotType& slot = slot_types()[static_cast<size_t>(item[1] - '0')];
      std::vector<std::string> value =
          options.open_vocabulary ? std::vector<std::string>{pick(pool, rng)}
                                  : pick(slot.values, rng);
      MrlNode node;
      node.label = MrlLabel::parse(slot.label);
      node.text = value;
      e.question_tokens.insert(e.question_tokens.end(), value.begin(), value.end());
      e.mrl.root.children.push_back(std::move(node));
    }
    corpus.examples.push_back(std::move(e));
  }
  return corpus;
}

bool is_function_word(std::string_view word) { return function_words().contains(word); }

std::string cognate_word(std::string_view word) {
  std::string out(word);
  if (out.empty() || is_function_word(word)) return out;
  char& last = out.back();
  if (!is_vowel(last)) {
    out += 'o';
  } else if (last == 'a') {
    last = 'e';
  } else if (last == 'e') {
    last = 'i';
  } else {
    last = 'a';
  }
  return out;
}

Example cognate_example(const Example& example, const std::string& lang) {
  Example out = example;
  out.id = example.id + "-" + lang;
  out.lang = lang;
  for (std::string& token : out.question_tokens) token = cognate_word(token);
  for (MrlNode* leaf : leaf_nodes(out.mrl)) {
    for (std::string& token : leaf->text) token = cognate_word(token);
  }
  return out;
}

Corpus cognate_corpus(const Corpus& corpus, const std::string& lang) {
  Corpus out;
  out.split = corpus.split;
  for (const Example& e : corpus.examples) out.examples.push_back(cognate_example(e, lang));
  return out;
}

std::map<std::string, std::string> cognate_lexicon(const Corpus& corpus) {
  std::map<std::string, std::string> lexicon;
  for (const Example& e : corpus.examples) {
    for (const std::string& token : e.question_tokens) lexicon[token] = cognate_word(token);
  }
  return lexicon;
}

ParallelCorpus monotone_parallel_corpus(size_t pairs, size_t lexicon_size, uint64_t seed,
                                        size_t min_len, size_t max_len) {
  ParallelCorpus out;
  std::vector<std::string> words = pseudo_words(2 * lexicon_size, seed ^ 0x5bd1e995ULL);
  std::vector<std::string> source(words.begin(),
                                  words.begin() + static_cast<std::ptrdiff_t>(lexicon_size));
  std::vector<std::string> target(words.begin() + static_cast<std::ptrdiff_t>(lexicon_size),
                                  words.end());
  for (size_t k = 0; k < lexicon_size; ++k) out.lexicon[source[k]] = target[k];
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> length(min_len, max_len);
  std::uniform_int_distribution<size_t> word(0, lexicon_size - 1);
  for (size_t p = 0; p < pairs; ++p) {
    SentencePair pair;
    Alignment gold;
    size_t n = length(rng);
    for (size_t k = 0; k < n; ++k) {
      size_t w = word(rng);
      pair.source.push_back(source[w]);
      pair.target.push_back(target[w]);
      gold.pairs.emplace_back(static_cast<int>(k), static_cast<int>(k));
    }
    out.pairs.push_back(std::move(pair));
    out.gold.push_back(std::move(gold));
  }
  return out;
}

}  // namespace mtop::synth
