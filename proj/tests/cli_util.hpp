#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace test {

struct CliRun {
  int status = -1;
  std::string output;  // stdout and stderr together
};

inline std::filesystem::path cli_tmp(const std::string& name) {
  std::filesystem::path p = COCONOLAB_TEST_TMP;
  std::filesystem::create_directories(p);
  return p / name;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline CliRun run_cli(const std::string& args, const std::string& tag = "cli") {
  const auto log = cli_tmp(tag + ".log");
  const std::string cmd = std::string("\"") + COCONOLAB_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  CliRun r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.output = read_text(log);
  return r;
}

}  // namespace test
