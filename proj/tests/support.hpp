#pragma once

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "flowpref/corpus.hpp"

namespace testsupport {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("flowpref_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline flowpref::corpus::Turn patient(std::string text) {
  return {flowpref::corpus::Speaker::Patient, std::move(text)};
}

inline flowpref::corpus::Turn doctor(std::string text) {
  return {flowpref::corpus::Speaker::Doctor, std::move(text)};
}

// Alternating dialogue with `rounds` (patient, doctor) exchanges.
inline flowpref::corpus::Dialogue make_dialogue(const std::string& id, int rounds) {
  flowpref::corpus::Dialogue dialogue;
  dialogue.id = id;
  for (int i = 0; i < rounds; ++i) {
    dialogue.turns.push_back(patient("patient line " + std::to_string(i) + " of " + id));
    dialogue.turns.push_back(doctor("doctor line " + std::to_string(i) + " of " + id));
  }
  return dialogue;
}

}  // namespace testsupport
