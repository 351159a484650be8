#include "spde/file_formats.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "spde/error.hpp"

namespace spde {

static_assert(std::endian::native == std::endian::little,
              "binary formats are read and written in host order");

namespace {

constexpr std::size_t kMagicBytes = 8;

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::Io, "cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCategory::Io, "read error on '" + path.string() + "'");
  return bytes;
}

void spill(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::Io, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) fail(ErrorCategory::Io, "write error on '" + path.string() + "'");
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void f64s(const double* p, std::size_t n) { bytes(p, n * sizeof(double)); }
  [[nodiscard]] const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}

  void need(std::size_t n, const std::string& field) const {
    if (b_.size() - pos_ < n) {
      fail(ErrorCategory::Format, what_ + ": truncated at field '" + field + "' (need " +
                                      std::to_string(n) + " bytes at offset " +
                                      std::to_string(pos_) + ", file has " +
                                      std::to_string(b_.size()) + ")");
    }
  }
  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v;
    std::memcpy(&v, b_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string raw(std::size_t n, const std::string& field) {
    need(n, field);
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void f64s(double* dst, std::size_t n, const std::string& field) {
    if (n > (b_.size() - pos_) / sizeof(double)) need(n * sizeof(double), field);
    std::memcpy(dst, b_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  [[nodiscard]] std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::vector<char>& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void read_meta(const std::filesystem::path& path, Dataset& ds) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "scheme") ds.scheme = parse_scheme(value);
      else if (key == "seed") ds.seed = std::stoull(value);
      else if (key == "noise_r") ds.noise.r = std::stod(value);
      else if (key == "noise_eps") ds.noise.eps = std::stod(value);
      else if (key == "noise_L") ds.noise.L = std::stoi(value);
    } catch (const std::exception&) {
      fail(ErrorCategory::Format, "sidecar '" + path.string() + "': bad value for '" + key + "'");
    }
  }
}

RowMatrix row_of(std::initializer_list<double> v) {
  RowMatrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

RowMatrix row_of(const std::vector<double>& v) {
  return Eigen::Map<const RowMatrix>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
}

const RowMatrix& entry(const NamedArrays& in, const std::string& name) {
  const auto it = in.find(name);
  if (it == in.end()) fail(ErrorCategory::Format, "checkpoint: missing entry '" + name + "'");
  return it->second;
}

const RowMatrix& entry(const NamedArrays& in, const std::string& name, Eigen::Index rows,
                       Eigen::Index cols) {
  const RowMatrix& m = entry(in, name);
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorCategory::Format, "checkpoint: entry '" + name + "' is " + std::to_string(m.rows()) +
                                    "x" + std::to_string(m.cols()) + ", expected " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  return m;
}

int as_int(double v, const std::string& name) {
  if (v != static_cast<double>(static_cast<long long>(v))) {
    fail(ErrorCategory::Format, "checkpoint: non-integer value in '" + name + "'");
  }
  return static_cast<int>(v);
}

std::vector<double> to_vector(const RowMatrix& m) {
  return {m.data(), m.data() + m.size()};
}

}  // namespace

std::filesystem::path meta_path(const std::filesystem::path& dataset) {
  return std::filesystem::path(dataset.string() + ".meta");
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  const std::size_t per = ds.times.size() * ds.space.size();
  require(per > 0 && ds.fields.size() % per == 0, "write_dataset: inconsistent field buffer");
  Writer w;
  w.bytes(kDatasetMagic, kMagicBytes);
  w.u32(static_cast<std::uint32_t>(ds.n_trajectories()));
  w.u32(static_cast<std::uint32_t>(ds.times.size()));
  w.u32(static_cast<std::uint32_t>(ds.space.size()));
  w.u32(static_cast<std::uint32_t>(ds.regime));
  w.u32(static_cast<std::uint32_t>(ds.N));
  w.u32(static_cast<std::uint32_t>(ds.K));
  w.u32(static_cast<std::uint32_t>(ds.L));
  w.f64s(ds.times.data(), ds.times.size());
  w.f64s(ds.space.data(), ds.space.size());
  w.f64s(ds.fields.data(), ds.fields.size());
  spill(path, w.str());

  std::string meta;
  meta += "scheme = " + std::string(scheme_name(ds.scheme)) + "\n";
  meta += "seed = " + std::to_string(ds.seed) + "\n";
  meta += "T = " + format_real(ds.times.empty() ? 0.0 : ds.times.back()) + "\n";
  meta += "noise_r = " + format_real(ds.noise.r) + "\n";
  meta += "noise_eps = " + format_real(ds.noise.eps) + "\n";
  meta += "noise_L = " + std::to_string(ds.noise.L) + "\n";
  spill(meta_path(path), meta);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  Reader r(bytes, "dataset '" + path.string() + "'");
  if (r.raw(kMagicBytes, "magic") != std::string(kDatasetMagic, kMagicBytes)) {
    fail(ErrorCategory::Format, "dataset '" + path.string() + "': bad field 'magic' (expected SPDEDS01)");
  }
  const std::uint32_t m1 = r.u32("M1");
  const std::uint32_t nt = r.u32("M2+1");
  const std::uint32_t m3 = r.u32("M3");
  const std::uint32_t regime = r.u32("regime");
  const std::uint32_t n = r.u32("N");
  const std::uint32_t k = r.u32("K");
  const std::uint32_t l = r.u32("L");
  auto bad = [&](const std::string& field, std::uint32_t v, const std::string& why) {
    fail(ErrorCategory::Format, "dataset '" + path.string() + "': bad field '" + field +
                                    "' = " + std::to_string(v) + " (" + why + ")");
  };
  if (m1 == 0) bad("M1", m1, "must be positive");
  if (nt < 2) bad("M2+1", nt, "need at least two time points");
  if (m3 == 0) bad("M3", m3, "must be positive");
  if (regime > 1) bad("regime", regime, "expected 0 (A) or 1 (B)");
  if (n == 0) bad("N", n, "must be positive");
  if (k == 0) bad("K", k, "must be positive");
  if (l == 0 || l > n) bad("L", l, "must lie in [1, N]");
  const unsigned long long values =
      static_cast<unsigned long long>(nt) + m3 +
      static_cast<unsigned long long>(m1) * nt * m3;
  const unsigned long long expected = values * sizeof(double);
  if (r.remaining() != expected) {
    fail(ErrorCategory::Format,
         "dataset '" + path.string() + "': size mismatch for header (M1, M2+1, M3) = (" +
             std::to_string(m1) + ", " + std::to_string(nt) + ", " + std::to_string(m3) +
             "): payload must be " + std::to_string(expected) + " bytes, found " +
             std::to_string(r.remaining()));
  }
  Dataset ds;
  ds.regime = static_cast<Regime>(regime);
  ds.N = static_cast<int>(n);
  ds.K = static_cast<int>(k);
  ds.L = static_cast<int>(l);
  ds.times.resize(nt);
  ds.space.resize(m3);
  ds.fields.resize(static_cast<std::size_t>(m1) * nt * m3);
  r.f64s(ds.times.data(), ds.times.size(), "times");
  r.f64s(ds.space.data(), ds.space.size(), "space");
  r.f64s(ds.fields.data(), ds.fields.size(), "fields");
  for (std::size_t j = 1; j < ds.times.size(); ++j) {
    if (!(ds.times[j] > ds.times[j - 1])) {
      fail(ErrorCategory::Format, "dataset '" + path.string() + "': bad field 'times' (not increasing at index " +
                                      std::to_string(j) + ")");
    }
  }
  ds.noise.L = ds.L;
  read_meta(meta_path(path), ds);
  return ds;
}

void write_arrays(const std::filesystem::path& path, const NamedArrays& arrays) {
  Writer w;
  w.bytes(kCheckpointMagic, kMagicBytes);
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.f64s(m.data(), static_cast<std::size_t>(m.size()));
  }
  spill(path, w.str());
}

NamedArrays read_arrays(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  Reader r(bytes, "checkpoint '" + path.string() + "'");
  if (r.raw(kMagicBytes, "magic") != std::string(kCheckpointMagic, kMagicBytes)) {
    fail(ErrorCategory::Format, "checkpoint '" + path.string() + "': bad field 'magic' (expected SPDECK01)");
  }
  const std::uint32_t count = r.u32("entry count");
  NamedArrays out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string tag = "entry " + std::to_string(i);
    const std::uint32_t len = r.u32(tag + " name length");
    std::string name = r.raw(len, tag + " name");
    const std::uint32_t rows = r.u32(name + " rows");
    const std::uint32_t cols = r.u32(name + " cols");
    RowMatrix m(rows, cols);
    r.f64s(m.data(), static_cast<std::size_t>(rows) * cols, name + " values");
    if (!out.emplace(std::move(name), std::move(m)).second) {
      fail(ErrorCategory::Format, "checkpoint '" + path.string() + "': duplicate " + tag);
    }
  }
  if (r.remaining() != 0) {
    fail(ErrorCategory::Format, "checkpoint '" + path.string() + "': " +
                                    std::to_string(r.remaining()) + " trailing bytes");
  }
  return out;
}

void put_model(NamedArrays& out, const std::string& prefix, const VariationalModel& model) {
  const auto& s = model.shape();
  out[prefix + "shape"] = row_of({static_cast<double>(s.regime), static_cast<double>(s.N),
                                  static_cast<double>(s.K), static_cast<double>(s.L),
                                  static_cast<double>(s.hidden),
                                  static_cast<double>(s.rk4_substeps)});
  out[prefix + "times"] = row_of(s.times);
  out[prefix + "space"] = row_of(s.space);
  for (const auto& p : model.params()) out[prefix + "param/" + p.name] = p.value;
  out[prefix + "norm/mean"] = model.input_mean;
  out[prefix + "norm/scale"] = row_of({model.input_scale});
  out[prefix + "uncond"] = model.has_unconditional_state()
                               ? RowMatrix(model.z0_mean.transpose())
                               : RowMatrix(1, 0);
}

VariationalModel get_model(const NamedArrays& in, const std::string& prefix) {
  const RowMatrix& sh = entry(in, prefix + "shape", 1, 6);
  ModelShape s;
  const int regime = as_int(sh(0, 0), prefix + "shape");
  if (regime != 0 && regime != 1) fail(ErrorCategory::Format, "checkpoint: bad regime code");
  s.regime = static_cast<Regime>(regime);
  s.N = as_int(sh(0, 1), prefix + "shape");
  s.K = as_int(sh(0, 2), prefix + "shape");
  s.L = as_int(sh(0, 3), prefix + "shape");
  s.hidden = as_int(sh(0, 4), prefix + "shape");
  s.rk4_substeps = as_int(sh(0, 5), prefix + "shape");
  s.times = to_vector(entry(in, prefix + "times"));
  s.space = to_vector(entry(in, prefix + "space"));
  VariationalModel m(s, 0);
  for (auto& p : m.params()) {
    p.value = entry(in, prefix + "param/" + p.name, p.value.rows(), p.value.cols());
    p.zero_grad();
  }
  m.input_mean = entry(in, prefix + "norm/mean", 1, s.n_encoder_inputs());
  m.input_scale = entry(in, prefix + "norm/scale", 1, 1)(0, 0);
  const RowMatrix& u = entry(in, prefix + "uncond");
  if (u.size() != 0) {
    if (u.size() != s.N) fail(ErrorCategory::Format, "checkpoint: entry 'uncond' has wrong length");
    m.z0_mean = Eigen::Map<const Vector>(u.data(), s.N);
  }
  return m;
}

void save_training_state(const std::filesystem::path& path, const TrainingState& st) {
  NamedArrays out;
  put_model(out, "model/", st.model);
  put_model(out, "best/", st.best);
  const auto& opt = st.optimizer;
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    const std::string& name = st.model.params()[i].name;
    out["adam/m/" + name] = opt.m[i];
    out["adam/v/" + name] = opt.v[i];
  }
  out["adam/state"] = row_of({static_cast<double>(opt.step), static_cast<double>(opt.warmup_epochs),
                              static_cast<double>(opt.total_epochs), opt.settings.beta1,
                              opt.settings.beta2, opt.settings.eps, opt.settings.weight_decay});
  out["adam/group_lr"] = row_of(opt.group_lr);
  out["state"] = row_of({static_cast<double>(st.next_epoch), static_cast<double>(st.best_epoch),
                         st.best_score});
  const int N = st.model.shape().N;
  const int L = st.model.shape().L;
  RowMatrix log(static_cast<Eigen::Index>(st.log.size()), 5 + N + L);
  for (std::size_t i = 0; i < st.log.size(); ++i) {
    const auto& e = st.log[i];
    const auto r = static_cast<Eigen::Index>(i);
    log(r, 0) = e.epoch;
    log(r, 1) = e.train_elbo;
    log(r, 2) = e.val_elbo;
    log(r, 3) = e.val_rel_l2;
    log(r, 4) = e.lr_scale;
    for (int n = 0; n < N; ++n) log(r, 5 + n) = e.lambda.at(static_cast<std::size_t>(n));
    for (int l = 0; l < L; ++l) log(r, 5 + N + l) = e.q.at(static_cast<std::size_t>(l));
  }
  out["log"] = log;
  write_arrays(path, out);
}

TrainingState load_training_state(const std::filesystem::path& path) {
  const NamedArrays in = read_arrays(path);
  TrainingState st;
  st.model = get_model(in, "model/");
  st.best = get_model(in, "best/");
  auto& opt = st.optimizer;
  for (const auto& p : st.model.params()) {
    opt.m.push_back(entry(in, "adam/m/" + p.name, p.value.rows(), p.value.cols()));
    opt.v.push_back(entry(in, "adam/v/" + p.name, p.value.rows(), p.value.cols()));
  }
  const RowMatrix& a = entry(in, "adam/state", 1, 7);
  opt.step = static_cast<std::int64_t>(a(0, 0));
  opt.warmup_epochs = as_int(a(0, 1), "adam/state");
  opt.total_epochs = as_int(a(0, 2), "adam/state");
  opt.settings.beta1 = a(0, 3);
  opt.settings.beta2 = a(0, 4);
  opt.settings.eps = a(0, 5);
  opt.settings.weight_decay = a(0, 6);
  opt.group_lr = to_vector(entry(in, "adam/group_lr", 1, 3));
  const RowMatrix& s = entry(in, "state", 1, 3);
  st.next_epoch = as_int(s(0, 0), "state");
  st.best_epoch = as_int(s(0, 1), "state");
  st.best_score = s(0, 2);
  const int N = st.model.shape().N;
  const int L = st.model.shape().L;
  const RowMatrix& log = entry(in, "log");
  if (log.rows() > 0 && log.cols() != 5 + N + L) {
    fail(ErrorCategory::Format, "checkpoint: entry 'log' has wrong width");
  }
  for (Eigen::Index r = 0; r < log.rows(); ++r) {
    EpochRecord e;
    e.epoch = as_int(log(r, 0), "log");
    e.train_elbo = log(r, 1);
    e.val_elbo = log(r, 2);
    e.val_rel_l2 = log(r, 3);
    e.lr_scale = log(r, 4);
    for (int n = 0; n < N; ++n) e.lambda.push_back(log(r, 5 + n));
    for (int l = 0; l < L; ++l) e.q.push_back(log(r, 5 + N + l));
    st.log.push_back(std::move(e));
  }
  return st;
}

void save_model(const std::filesystem::path& path, const VariationalModel& model) {
  NamedArrays out;
  put_model(out, "model/", model);
  write_arrays(path, out);
}

VariationalModel load_model(const std::filesystem::path& path) {
  const NamedArrays in = read_arrays(path);
  return get_model(in, in.count("best/shape") != 0 ? "best/" : "model/");
}

}  // namespace spde
