#include <doctest.h>

#include <fstream>
#include <string>

#include "kernelcf/summary.hpp"
#include "support.hpp"

using namespace kcf;

namespace {

SampledSummary tiny() {
  SampledSummary s;
  s.rows = {{2, 0}, {}, {1}};
  for (auto& r : s.rows) std::sort(r.begin(), r.end());
  s.item_ids = {"a", "b", "c"};
  s.meta.source_hash = "deadbeef00000000";
  s.meta.mu = 3;
  s.meta.gamma = 7;
  s.meta.tau = 0.5;
  s.meta.lambda = 1.5;
  s.meta.lambda2 = 0.25;
  s.meta.seed = 99;
  s.meta.outer_iterations = 12;
  return s;
}

}  // namespace

TEST_SUITE("summary") {

TEST_CASE("summary round-trips with metadata") {
  auto dir = testsup::scratch_dir("summary");
  auto s = tiny();
  write_summary(s, dir + "/s.summary");
  auto back = read_summary(dir + "/s.summary");
  CHECK(back.rows == s.rows);
  CHECK(back.item_ids == s.item_ids);
  CHECK(back.meta.source_hash == s.meta.source_hash);
  CHECK(back.meta.mu == s.meta.mu);
  CHECK(back.meta.gamma == s.meta.gamma);
  CHECK(back.meta.tau == s.meta.tau);
  CHECK(back.meta.lambda == s.meta.lambda);
  CHECK(back.meta.lambda2 == s.meta.lambda2);
  CHECK(back.meta.seed == s.meta.seed);
  CHECK(back.meta.outer_iterations == s.meta.outer_iterations);
}

TEST_CASE("writer is byte-deterministic") {
  auto dir = testsup::scratch_dir("summary_bytes");
  auto s = tiny();
  write_summary(s, dir + "/a");
  write_summary(s, dir + "/b");
  std::ifstream fa(dir + "/a", std::ios::binary), fb(dir + "/b", std::ios::binary);
  std::string a((std::istreambuf_iterator<char>(fa)), {});
  std::string b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(a == b);
  CHECK(!a.empty());
}

TEST_CASE("reader rejects tampered files") {
  auto dir = testsup::scratch_dir("summary_bad");
  auto s = tiny();
  write_summary(s, dir + "/s");

  std::ifstream in(dir + "/s", std::ios::binary);
  std::string body((std::istreambuf_iterator<char>(in)), {});
  in.close();

  // drop the last entry line -> checksum mismatch
  auto cut = body.rfind('\n', body.size() - 2);
  std::ofstream(dir + "/short", std::ios::binary) << body.substr(0, cut + 1);
  CHECK_THROWS_AS(read_summary(dir + "/short"), ConfigError);

  // out-of-range column
  std::ofstream(dir + "/range", std::ios::binary) << body << "0\t9\n";
  CHECK_THROWS_AS(read_summary(dir + "/range"), ConfigError);

  CHECK_THROWS_AS(read_summary(dir + "/nonexistent"), ConfigError);
}

TEST_CASE("summary views as a dataset with synthetic user ids") {
  auto s = tiny();
  auto ds = summary_to_dataset(s);
  REQUIRE(ds.num_users() == 3);
  CHECK(ds.item_ids == s.item_ids);
  CHECK(ds.rows[0] == std::vector<std::uint32_t>{0, 2});
  CHECK(ds.rows[1].empty());
  CHECK(ds.rows[2] == std::vector<std::uint32_t>{1});
  CHECK(ds.user_ids[0] != ds.user_ids[1]);
  CHECK(ds.n_interactions == 3);
}

}  // TEST_SUITE
