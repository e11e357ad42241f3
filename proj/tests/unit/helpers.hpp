#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "permurank/core.hpp"
#include "permurank/gateway.hpp"
#include "permurank/random.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "permurank") {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline permurank::Passage passage(const std::string& docid, const std::string& text = "text") {
  return {docid, text, std::nullopt};
}

/// Candidates d1..dM in order, texts "passage i".
inline permurank::CandidateList numbered_list(int m, const std::string& qid = "q1") {
  std::vector<permurank::Passage> ps;
  for (int i = 1; i <= m; ++i) ps.push_back(passage("d" + std::to_string(i), "passage " + std::to_string(i)));
  return permurank::CandidateList::from_passages({qid, "query text"}, std::move(ps));
}

/// Mock-oracle gateway whose truth is a per-docid score map.
inline std::shared_ptr<permurank::gateway::Gateway> oracle_gateway(std::unordered_map<std::string, double> truth,
                                                                   permurank::gateway::FaultRates faults = {},
                                                                   int in_flight = 4) {
  auto model = permurank::gateway::MockOracle::from_scores(std::move(truth), faults);
  return std::make_shared<permurank::gateway::Gateway>(model, in_flight);
}

}  // namespace testutil
