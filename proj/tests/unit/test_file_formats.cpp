#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "spde/error.hpp"
#include "spde/file_formats.hpp"

using namespace spde;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "spde_unit_files";
  fs::create_directories(dir);
  return dir / name;
}

Dataset tiny_dataset(int M1) {
  SimConfig c = SimConfig::full_scale_defaults(Regime::B_DirichletHeat);
  c.N = 3;
  c.K = 2;
  c.L = 2;
  c.noise.L = 2;
  c.M1 = M1;
  c.M2 = 6;
  c.M3 = 5;
  c.master_seed = 12;
  return generate_dataset(c);
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

std::string read_error(const fs::path& p) {
  try {
    (void)read_dataset(p);
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Format);
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("file_formats") {

TEST_CASE("dataset round trip is bit-exact") {
  for (int M1 : {1, 4}) {
    const Dataset ds = tiny_dataset(M1);
    const fs::path p = scratch("round_" + std::to_string(M1) + ".bin");
    write_dataset(p, ds);
    CHECK(fs::file_size(p) == 8 + 7 * 4 + 8 * (7 + 5 + static_cast<std::uintmax_t>(M1) * 7 * 5));
    const Dataset back = read_dataset(p);
    CHECK(back.times == ds.times);
    CHECK(back.space == ds.space);
    CHECK(back.fields == ds.fields);
    CHECK(back.N == 3);
    CHECK(back.K == 2);
    CHECK(back.L == 2);
    CHECK(back.regime == Regime::B_DirichletHeat);
    CHECK(back.seed == 12);
    CHECK(back.noise.L == ds.noise.L);
  }
}

TEST_CASE("corrupted dataset headers are rejected by field") {
  const Dataset ds = tiny_dataset(2);
  const fs::path p = scratch("good.bin");
  write_dataset(p, ds);
  const auto good = bytes_of(p);

  auto bad = good;
  bad[0] = 'X';
  write_bytes(scratch("magic.bin"), bad);
  CHECK(read_error(scratch("magic.bin")).find("magic") != std::string::npos);

  bad = good;
  bad.pop_back();
  write_bytes(scratch("short.bin"), bad);
  CHECK(read_error(scratch("short.bin")).find("size") != std::string::npos);

  bad = good;
  bad[8] = 3;  // M1 low byte
  write_bytes(scratch("m1.bin"), bad);
  CHECK(read_error(scratch("m1.bin")).find("M1") != std::string::npos);

  bad = good;
  bad[8 + 12] = 7;  // regime code
  write_bytes(scratch("regime.bin"), bad);
  CHECK(read_error(scratch("regime.bin")).find("regime") != std::string::npos);

  bad = std::vector<char>(good.begin(), good.begin() + 10);
  write_bytes(scratch("trunc.bin"), bad);
  CHECK_FALSE(read_error(scratch("trunc.bin")).empty());
  CHECK_THROWS_AS((void)read_dataset(scratch("does_not_exist.bin")), Error);
}

TEST_CASE("named array container") {
  NamedArrays a;
  a["b"] = RowMatrix::Constant(2, 3, 1.5);
  a["a"] = RowMatrix::Zero(0, 0);
  a["c/d"] = RowMatrix::Identity(3, 3);
  const fs::path p = scratch("arrays.ckpt");
  write_arrays(p, a);
  const NamedArrays back = read_arrays(p);
  REQUIRE(back.size() == 3);
  CHECK(back.at("b") == a["b"]);
  CHECK(back.at("c/d") == a["c/d"]);
  auto bytes = bytes_of(p);
  bytes[3] = '9';
  write_bytes(scratch("arrays_bad.ckpt"), bytes);
  CHECK_THROWS_AS((void)read_arrays(scratch("arrays_bad.ckpt")), Error);
}

TEST_CASE("model checkpoints round trip") {
  const Dataset ds = tiny_dataset(20);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 5;
  t.hidden = 8;
  t.warmup_epochs = 1;
  TrainingState st = start_training(ds, t);
  train_epochs(st, ds, t, 2);
  const fs::path p = scratch("state.ckpt");
  save_training_state(p, st);
  const TrainingState back = load_training_state(p);
  CHECK(back.next_epoch == 2);
  CHECK(back.best_epoch == st.best_epoch);
  CHECK(back.log.size() == 2);
  CHECK(back.optimizer.step == st.optimizer.step);
  for (std::size_t i = 0; i < st.model.params().size(); ++i) {
    CHECK(back.model.params()[i].value == st.model.params()[i].value);
    CHECK(back.optimizer.m[i] == st.optimizer.m[i]);
  }
  CHECK(back.model.input_mean == st.model.input_mean);
  CHECK(back.model.input_scale == st.model.input_scale);
  CHECK(back.best.z0_mean == st.best.z0_mean);

  const VariationalModel best = load_model(p);
  CHECK(best.param(VariationalModel::kW1).value == st.best.param(VariationalModel::kW1).value);
  save_model(scratch("model.ckpt"), st.best);
  CHECK(load_model(scratch("model.ckpt")).param(VariationalModel::kB3).value ==
        st.best.param(VariationalModel::kB3).value);
}

}
