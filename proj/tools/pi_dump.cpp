// Prints the pi point-stream counts and estimate in the same text format as
// tests/reference_pi.py, so a shell diff can compare the two implementations
// byte for byte.
//
//   pi_dump counts <seed> <task> <n>    -> "I O"
//   pi_dump estimate <seed> <maps> <n>  -> "inside=I estimate=R round4=X"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include "mrh/jobs.hpp"
#include "mrh/util.hpp"

namespace {

std::int64_t arg_i64(const char* s) { return std::strtoll(s, nullptr, 10); }
std::uint64_t arg_u64(const char* s) { return std::strtoull(s, nullptr, 10); }

// Shortest decimal that round-trips — matches repr() for the values the
// cross-check feeds in (plain non-integral doubles around 3.14).
std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc == 5 && std::strcmp(argv[1], "counts") == 0) {
    auto [inside, outside] =
        mrh::jobs::pi_map_counts(arg_u64(argv[2]), arg_i64(argv[3]),
                                 arg_i64(argv[4]));
    std::printf("%lld %lld\n", static_cast<long long>(inside),
                static_cast<long long>(outside));
    return 0;
  }
  if (argc == 5 && std::strcmp(argv[1], "estimate") == 0) {
    std::uint64_t seed = arg_u64(argv[2]);
    std::int64_t maps = arg_i64(argv[3]);
    std::int64_t n = arg_i64(argv[4]);
    std::int64_t inside = 0;
    for (std::int64_t t = 0; t < maps; ++t)
      inside += mrh::jobs::pi_map_counts(seed, t, n).first;
    double est = mrh::jobs::pi_estimate(inside, maps * n - inside);
    std::printf("inside=%lld estimate=%s round4=%.4f\n",
                static_cast<long long>(inside), shortest(est).c_str(),
                mrh::round_half_up4(est));
    return 0;
  }
  std::fprintf(stderr,
               "usage: pi_dump counts <seed> <task> <n>\n"
               "       pi_dump estimate <seed> <maps> <n>\n");
  return 2;
}
