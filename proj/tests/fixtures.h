#ifndef MTOP_TESTS_FIXTURES_H_
#define MTOP_TESTS_FIXTURES_H_

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mtop/dataset.h"
#include "mtop/mrl.h"

namespace mtop::testing {

inline constexpr const char* kTable1Mrl =
    "[IN:GET_EVENT [SL:CATEGORY_EVENT festivals ] [SL:DATE_TIME this weekend ] ]";
inline constexpr const char* kTable1Top =
    "[IN:GET_EVENT Any [SL:CATEGORY_EVENT festivals ] [SL:DATE_TIME this weekend ] ]";
inline constexpr const char* kTable3Mrl =
    "[IN:GET_EVENT [SL:CATEGORY_EVENT festival ] [SL:DATE_TIME questo fine settimana ] ]";

inline Example table1_example() {
  Example e;
  e.id = "t1";
  e.lang = "en";
  e.question_tokens = {"Any", "festivals", "this", "weekend"};
  e.mrl = parse_mrl(kTable1Mrl);
  return e;
}

inline std::vector<std::string> italian_translation() {
  return {"Tutti", "i", "festival", "questo", "fine", "settimana"};
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mtop_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random well-formed adapted MRL tree.
inline MrlNode random_node(std::mt19937_64& rng, bool intent, int depth) {
  static const std::vector<std::string> words = {"a", "bb", "ccc", "festa", "d'oro", "東京"};
  MrlNode node;
  std::uniform_int_distribution<int> label(0, 3);
  node.label.kind = intent ? LabelKind::kIntent : LabelKind::kSlot;
  node.label.name = std::string(intent ? "IN:" : "SL:") + "L" + std::to_string(label(rng));
  if (intent) {
    int kids = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int i = 0; i < kids; ++i) node.children.push_back(random_node(rng, false, depth + 1));
  } else if (depth < 3 && std::uniform_int_distribution<int>(0, 3)(rng) == 0) {
    node.children.push_back(random_node(rng, true, depth + 1));
  } else {
    int n = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int i = 0; i < n; ++i) {
      node.text.push_back(words[std::uniform_int_distribution<size_t>(0, words.size() - 1)(rng)]);
    }
  }
  return node;
}

inline MrlTree random_tree(std::mt19937_64& rng) { return MrlTree{random_node(rng, true, 0)}; }

}  // namespace mtop::testing

#endif  // MTOP_TESTS_FIXTURES_H_
