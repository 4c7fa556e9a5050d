#ifndef MTOP_SYNTH_H_
#define MTOP_SYNTH_H_

// Deterministic synthetic data: a small intent/slot grammar, a cognate
// language derived by suffix rewriting, and monotone parallel corpora from
// a bijective lexicon.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mtop/aligner.h"
#include "mtop/dataset.h"

namespace mtop::synth {

struct GrammarOptions {
  size_t count = 200;
  uint64_t seed = 0;
  // Slot values become pseudo-words drawn from one half of a fixed pool;
  // partitions 0 and 1 never share a word.
  bool open_vocabulary = false;
  int partition = 0;
  std::string lang = "en";
  std::string id_prefix = "syn";
  Split split = Split::kTrain;
};

// Two intents and five slot types over a 50-word closed vocabulary.
Corpus grammar_corpus(const GrammarOptions& options);

std::vector<std::string> grammar_vocabulary();
std::vector<std::string> grammar_intents();
std::vector<std::string> grammar_slots();

// Distinct lowercase consonant-vowel words of two or three syllables.
std::vector<std::string> pseudo_words(size_t count, uint64_t seed,
                                      std::string_view consonants = "bdfgklmnprstvz");

// Closed-class words the cognate rewrite leaves alone.
bool is_function_word(std::string_view word);
// Suffix rewrite: a final consonant gains "o", a final vowel becomes "a",
// "e" or "i" by rotation (a->e, e->i, i->a, o->a, u->a).
std::string cognate_word(std::string_view word);
Example cognate_example(const Example& example, const std::string& lang);
Corpus cognate_corpus(const Corpus& corpus, const std::string& lang);
// word -> cognate_word(word) for every distinct token in the corpus.
std::map<std::string, std::string> cognate_lexicon(const Corpus& corpus);

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::vector<Alignment> gold;
  std::map<std::string, std::string> lexicon;
};

// Uniformly sampled source sentences translated word by word through a
// bijective lexicon, so the gold alignment is the diagonal.
ParallelCorpus monotone_parallel_corpus(size_t pairs, size_t lexicon_size, uint64_t seed,
                                        size_t min_len = 4, size_t max_len = 12);

}  // namespace mtop::synth

#endif  // MTOP_SYNTH_H_
