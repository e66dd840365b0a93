#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "stance/backbone.hpp"
#include "stance/data_model.hpp"
#include "stance/synthetic.hpp"
#include "stance/tokenizer.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("stance-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

inline const stance::Dataset& toy_task() {
  static const stance::Dataset ds = stance::synthetic::stance_task();
  return ds;
}

inline const stance::ToyTokenizer& toy_tokenizer() {
  static const stance::ToyTokenizer tok = [] {
    stance::LabelRegistry reg;
    return stance::build_toy_tokenizer(stance::synthetic::corpus_texts(toy_task()), reg.labels());
  }();
  return tok;
}

/// Full-size toy backbone over the synthetic task vocabulary.
inline std::unique_ptr<stance::ToyBackbone> toy_backbone(std::uint64_t seed = 0) {
  stance::ToyBackboneConfig c;
  c.seed = seed;
  return std::make_unique<stance::ToyBackbone>(toy_tokenizer(), c);
}

/// Tiny backbone for finite-difference checks.
inline std::unique_ptr<stance::ToyBackbone> tiny_backbone(std::uint64_t seed = 0) {
  stance::ToyBackboneConfig c;
  c.hidden_dim = 8;
  c.ffn_dim = 12;
  c.layers = 2;
  c.max_length = 160;
  c.seed = seed;
  return std::make_unique<stance::ToyBackbone>(toy_tokenizer(), c);
}

inline std::shared_ptr<const stance::LabelInventory> inventory(std::vector<std::string> labels,
                                                               stance::Lexicon lex = {},
                                                               std::string name = "t") {
  return std::make_shared<const stance::LabelInventory>(std::move(name), std::move(labels),
                                                        std::move(lex));
}

inline stance::StanceExample example(std::string id, std::string label,
                                     std::string target = "the new park",
                                     std::string context = "this is great",
                                     std::string dataset = "t") {
  return {std::move(id), std::move(target), std::move(context), std::move(label), "en",
          std::move(dataset)};
}

}  // namespace testing_support
