#include <cstdio>

#include <CLI11.hpp>

#include "mend/corpus.hpp"

// Emits deterministic vulnerable/fixed binary pairs with manifests, for tests
// and for exercising the patch tool by hand.
int main(int argc, char** argv) {
  CLI::App app{"generate vulnerable/fixed ARM test binaries"};
  uint32_t seed = 1, count = 6;
  std::string out = "corpus";
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--count", count, "number of cases");
  app.add_option("--out", out, "output directory")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    auto cases = mend::corpus::generate_corpus(seed, count);
    for (const auto& c : cases) {
      mend::corpus::write_case(c, out + "/" + c.name);
      printf("%s\n", c.name.c_str());
    }
  } catch (const std::exception& e) {
    fprintf(stderr, "corpusgen: %s\n", e.what());
    return 1;
  }
  return 0;
}
