#include "secdiv/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace secdiv {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path &p, std::string_view data) {
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

std::string variant_file(std::size_t i) {
  std::ostringstream os;
  os << "variant_" << std::setw(3) << std::setfill('0') << i << ".bin";
  return os.str();
}

std::vector<SecretPathSet> path_sets_of(const FunctionIR &f) {
  return extract_secret_path_sets(f, infer_types(f));
}

} // namespace

std::string percent(const Rational &r) {
  Rational scaled = r * 10000;
  bool neg = scaled < Rational(0);
  if (neg)
    scaled = -scaled;
  std::int64_t v = (scaled.numerator() * 2 + scaled.denominator()) / (2 * scaled.denominator());
  std::ostringstream os;
  os << (neg && v ? "-" : "") << v / 100 << '.' << std::setw(2) << std::setfill('0') << v % 100;
  return os.str();
}

FunctionIR read_function(const fs::path &file) { return parse_function(read_file(file)); }

std::optional<SecMode> parse_mode(std::string_view s) {
  if (s == "tsc")
    return SecMode::Tsc;
  if (s == "psc")
    return SecMode::Psc;
  if (s == "none")
    return SecMode::None;
  return std::nullopt;
}

// ---- compile

int CompileRun::exit_code() const {
  if (result.status == SolveStatus::Unsat)
    return kExitUnsat;
  if ((cr && !cr->secure()) || (psc && psc->complete && !psc->secure()))
    return kExitOracle;
  if (result.status == SolveStatus::Timeout)
    return kExitTimeout;
  return kExitOk;
}

CompileRun run_compile(const FunctionIR &f, const MachineProfile &p, SecMode mode,
                       Balancing balancing, double budget_secs, std::uint64_t seed) {
  CompileRun run;
  run.mode = mode;
  run.prepared = prepare(f, mode, balancing);
  const auto &prep = run.prepared;
  run.problem = build_problem(prep.function, prep.pairs, prep.psets, p, mode, Rational(0),
                              std::nullopt);
  run.result = solve_optimal(run.problem, budget_secs, seed);
  CopProblem base = build_problem(f, {}, {}, p, SecMode::None, Rational(0), std::nullopt);
  run.baseline = solve_optimal(base, budget_secs, seed);
  if (run.result.solution) {
    run.program = encode_solution(*run.result.solution, run.problem);
    if (mode == SecMode::Tsc)
      run.cr = check_cr(*run.program, prep.psets);
    else if (mode == SecMode::Psc)
      run.psc = check_psc(*run.program);
  }
  return run;
}

std::string compile_text(const FunctionIR &f, const CompileRun &run) {
  std::ostringstream os;
  os << "function " << f.name << "\n";
  os << "profile " << run.problem.profile.name << "\n";
  os << "mode " << to_string(run.mode) << "\n";
  os << "status " << to_string(run.result.status) << "\n";
  if (run.result.status == SolveStatus::Unsat)
    os << "unsat_family " << run.result.unsat_family << "\n";
  for (const auto &n : run.prepared.notes)
    os << "note " << n << "\n";
  if (run.result.solution)
    os << "objective " << format_rational(run.result.solution->objective) << "\n";
  if (run.baseline.solution) {
    os << "baseline " << format_rational(run.baseline.solution->objective) << "\n";
    if (run.result.solution) {
      Rational b = run.baseline.solution->objective;
      os << "overhead " << percent((run.result.solution->objective - b) / b) << "%\n";
    }
  }
  if (run.program)
    os << "words " << run.program->words.size() << "\n";
  if (run.cr)
    os << "oracle cr " << (run.cr->secure() ? "SECURE" : "INSECURE") << "\n";
  if (run.psc)
    os << "oracle psc "
       << (!run.psc->complete ? "INCOMPLETE" : run.psc->secure() ? "INDEPENDENT" : "LEAK") << "\n";
  return os.str();
}

// ---- pools

int PoolRun::exit_code() const {
  if (best_status == SolveStatus::Unsat)
    return kExitUnsat;
  if (best_status == SolveStatus::Timeout || pool.reason == "TIMEOUT")
    return kExitTimeout;
  return kExitOk;
}

PoolRun run_pool(const FunctionIR &f, const PoolConfig &cfg) {
  PoolRun run;
  run.config = cfg;
  run.function_name = f.name;
  const auto &p = profile_by_name(cfg.profile);
  auto t0 = Clock::now();
  if (cfg.mode == "naive") {
    auto np = naive_diversify(f, p, cfg.variants, cfg.seed, cfg.budget_secs);
    run.mode = "naive";
    run.checks = np.base_mode;
    run.prepared = std::move(np.prepared);
    run.problem = std::move(np.problem);
    run.pool = std::move(np.pool);
    run.solve_secs = seconds_since(t0);
  } else {
    SecMode mode = cfg.mode == "auto" ? auto_mode(f) : *parse_mode(cfg.mode);
    run.mode = std::string(to_string(mode));
    run.checks = mode;
    run.prepared = prepare(f, mode, cfg.balancing);
    const auto &prep = run.prepared;
    run.problem = build_problem(prep.function, prep.pairs, prep.psets, p, mode, Rational(0),
                                std::nullopt);
    auto best = solve_optimal(run.problem, cfg.budget_secs, cfg.seed);
    run.solve_secs = seconds_since(t0);
    run.best_status = best.status;
    run.unsat_family = best.unsat_family;
    if (!best.solution) {
      run.pool.gap = cfg.gap;
      run.pool.dthresh = cfg.dthresh;
      run.pool.reason = best.status == SolveStatus::Unsat ? "UNSAT" : "TIMEOUT";
      return run;
    }
    auto t1 = Clock::now();
    run.pool = diversify(run.problem, *best.solution, cfg.variants, cfg.gap, cfg.dthresh,
                         cfg.budget_secs, cfg.seed);
    run.diversify_secs = seconds_since(t1);
  }
  for (const auto &v : run.pool.variants)
    run.programs.push_back(encode_solution(v, run.problem));
  return run;
}

std::string manifest_text(const PoolRun &run) {
  const auto &c = run.config;
  std::ostringstream os;
  os << "secdiv-pool 1\n";
  os << "function " << run.function_name << "\n";
  os << "profile " << c.profile << "\n";
  os << "mode " << run.mode << "\n";
  os << "checks " << to_string(run.checks) << "\n";
  os << "balance " << (c.balancing == Balancing::Ebb ? "ebb" : "cbb") << "\n";
  os << "gap " << format_rational(c.gap) << "\n";
  os << "dthresh " << c.dthresh << "\n";
  os << "seed " << c.seed << "\n";
  os << "budget_secs " << c.budget_secs << "\n";
  os << "requested " << c.variants << "\n";
  os << "variants " << run.pool.variants.size() << "\n";
  os << "reason " << run.pool.reason << "\n";
  os << "solve_status " << to_string(run.best_status) << "\n";
  if (!run.unsat_family.empty())
    os << "unsat_family " << run.unsat_family << "\n";
  for (const auto &n : run.prepared.notes)
    os << "note " << n << "\n";
  if (!run.pool.variants.empty()) {
    os << "best " << format_rational(run.pool.variants[0].objective) << "\n";
    if (run.mode != "naive") {
      Rational scaled =
          run.pool.variants[0].objective * (Rational(1) + c.gap) * run.problem.weight_scale;
      os << "bound "
         << format_rational(Rational(scaled.numerator() / scaled.denominator(),
                                     run.problem.weight_scale))
         << "\n";
    }
  }
  os << "variant\tfile\tobjective\tseed\tmin_distance\n";
  for (std::size_t i = 0; i < run.pool.variants.size(); ++i) {
    const auto &v = run.pool.variants[i];
    os << i << '\t' << variant_file(i) << '\t' << format_rational(v.objective) << '\t' << v.seed
       << '\t';
    if (i == 0) {
      os << '-';
    } else {
      int d = std::numeric_limits<int>::max();
      for (std::size_t j = 0; j < i; ++j)
        d = std::min(d, distance(v, run.pool.variants[j], run.problem));
      os << d;
    }
    os << '\n';
  }
  return os.str();
}

std::string timing_text(const PoolRun &run) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "solve_secs " << run.solve_secs << "\n";
  os << "diversify_secs " << run.diversify_secs << "\n";
  os << "total_secs " << run.solve_secs + run.diversify_secs << "\n";
  return os.str();
}

void write_pool(const fs::path &dir, const PoolRun &run) {
  fs::create_directories(dir);
  for (const auto &entry : fs::directory_iterator(dir)) {
    auto name = entry.path().filename().string();
    if (name.rfind("variant_", 0) == 0 && entry.path().extension() == ".bin")
      fs::remove(entry.path());
  }
  write_file(dir / "function.mir", serialize_function(run.prepared.function));
  for (std::size_t i = 0; i < run.programs.size(); ++i) {
    auto bytes = dump_program(run.programs[i]);
    write_file(dir / variant_file(i),
               std::string_view(reinterpret_cast<const char *>(bytes.data()), bytes.size()));
  }
  write_file(dir / "manifest.txt", manifest_text(run));
  write_file(dir / "timing.txt", timing_text(run));
}

SecMode PoolOnDisk::checks() const {
  auto it = fields.find("checks");
  if (it == fields.end())
    return SecMode::None;
  return parse_mode(it->second).value_or(SecMode::None);
}

PoolOnDisk read_pool(const fs::path &dir) {
  PoolOnDisk pool;
  pool.dir = dir;
  for (const char *name : {"manifest.txt", "function.mir"})
    if (!fs::exists(dir / name))
      throw std::runtime_error("missing " + (dir / name).string());
  std::istringstream in(read_file(dir / "manifest.txt"));
  std::string line;
  bool rows = false;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    if (!rows) {
      if (line.rfind("variant\t", 0) == 0) {
        rows = true;
        continue;
      }
      auto sp = line.find(' ');
      auto key = line.substr(0, sp);
      auto value = sp == std::string::npos ? std::string() : line.substr(sp + 1);
      if (key == "note")
        continue;
      pool.fields[key] = value;
      continue;
    }
    std::istringstream row(line);
    std::string idx, file;
    std::getline(row, idx, '\t');
    std::getline(row, file, '\t');
    if (file.empty())
      throw std::runtime_error("malformed manifest row in " + (dir / "manifest.txt").string());
    pool.files.push_back(file);
  }
  pool.function = parse_function(read_file(dir / "function.mir"));
  for (const auto &file : pool.files) {
    auto bytes = read_file(dir / file);
    pool.programs.push_back(load_program(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t *>(bytes.data()), bytes.size())));
  }
  if (fs::exists(dir / "timing.txt")) {
    std::istringstream t(read_file(dir / "timing.txt"));
    std::string key;
    double v;
    while (t >> key >> v)
      if (key == "total_secs")
        pool.total_secs = v;
  }
  return pool;
}

bool VariantVerdict::pass() const {
  if (!equivalence.ok())
    return false;
  if (cr && !cr->secure())
    return false;
  if (psc && psc->complete && !psc->secure())
    return false;
  return true;
}

bool VariantVerdict::incomplete() const {
  return (cr && !cr->complete) || (psc && !psc->complete);
}

std::vector<VariantVerdict> verify_pool(const PoolOnDisk &pool) {
  std::vector<VariantVerdict> out;
  auto psets = path_sets_of(pool.function);
  for (std::size_t i = 0; i < pool.programs.size(); ++i) {
    VariantVerdict v;
    v.file = pool.files[i];
    v.equivalence = check_equivalence(pool.programs[0], pool.programs[i]);
    if (pool.checks() == SecMode::Tsc)
      v.cr = check_cr(pool.programs[i], psets);
    else if (pool.checks() == SecMode::Psc)
      v.psc = check_psc(pool.programs[i]);
    out.push_back(std::move(v));
  }
  return out;
}

// ---- tables

std::string Table::render(bool csv) const {
  std::ostringstream os;
  if (csv) {
    auto line = [&](const std::vector<std::string> &cells) {
      for (std::size_t i = 0; i < cells.size(); ++i)
        os << (i ? "," : "") << cells[i];
      os << "\n";
    };
    line(header);
    for (const auto &r : rows)
      line(r);
    return os.str();
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t i = 0; i < header.size(); ++i)
    width[i] = header[i].size();
  for (const auto &r : rows)
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i)
      width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string> &cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      s += cells[i];
      if (i + 1 < cells.size())
        s += std::string(width[i] - cells[i].size() + 2, ' ');
    }
    os << s << "\n";
  };
  line(header);
  for (const auto &r : rows)
    line(r);
  return os.str();
}

namespace {

std::string field(const PoolOnDisk &p, const std::string &k) {
  auto it = p.fields.find(k);
  return it == p.fields.end() ? "-" : it->second;
}

std::string gap_percent(const PoolOnDisk &p) {
  auto it = p.fields.find("gap");
  if (it == p.fields.end())
    return "-";
  return percent(parse_rational(it->second));
}

} // namespace

Table gadget_table(const std::vector<PoolOnDisk> &pools) {
  Table t;
  t.header = {"function", "profile", "mode", "gap%", "N", "srate=0%", "(0,20]%", "(20,100]%",
              "mean_srate"};
  for (const auto &p : pools) {
    std::vector<std::string> row = {field(p, "function"), field(p, "profile"), field(p, "mode"),
                                    gap_percent(p), std::to_string(p.programs.size())};
    if (p.programs.size() < 2) {
      row.insert(row.end(), {"-", "-", "-", "-"});
    } else {
      auto h = pool_histogram(p.programs);
      Rational n(static_cast<std::int64_t>(h.total()));
      row.push_back(percent(Rational(static_cast<std::int64_t>(h.zero)) / n));
      row.push_back(percent(Rational(static_cast<std::int64_t>(h.low)) / n));
      row.push_back(percent(Rational(static_cast<std::int64_t>(h.high)) / n));
      row.push_back(percent(h.mean) + "%");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string report_text(const fs::path &dir, bool csv, bool timing) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto &e : fs::directory_iterator(dir))
    if (e.is_directory())
      subdirs.push_back(e.path());
  subdirs.push_back(dir);
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<PoolOnDisk> pools;
  Table overhead;
  overhead.header = {"function", "profile", "mode", "objective", "baseline", "overhead%", "oracle"};
  for (const auto &d : subdirs) {
    if (fs::exists(d / "manifest.txt"))
      pools.push_back(read_pool(d));
    if (fs::exists(d / "compile.txt")) {
      std::istringstream in(read_file(d / "compile.txt"));
      std::map<std::string, std::string> kv;
      std::string line;
      while (std::getline(in, line)) {
        auto sp = line.find(' ');
        if (sp != std::string::npos && line.rfind("note", 0) != 0)
          kv[line.substr(0, sp)] = line.substr(sp + 1);
      }
      auto get = [&](const char *k) { return kv.count(k) ? kv[k] : std::string("-"); };
      std::string oracle = kv.count("oracle") ? kv["oracle"] : "-";
      overhead.rows.push_back({get("function"), get("profile"), get("mode"), get("objective"),
                               get("baseline"), get("overhead"), oracle});
    }
  }
  if (pools.empty() && overhead.rows.empty())
    throw std::runtime_error("no results in " + dir.string() +
                             ": expected subdirectories with manifest.txt (diversify --out) or "
                             "compile.txt (compile --out)");
  std::ostringstream os;
  auto section = [&](const std::string &title, const Table &t) {
    if (t.rows.empty())
      return;
    if (!csv)
      os << "== " << title << "\n";
    else
      os << "# " << title << "\n";
    os << t.render(csv) << "\n";
  };
  section("overhead", overhead);

  Table sizes;
  sizes.header = {"function", "profile", "mode", "gap%", "N", "reason", "best"};
  if (timing)
    sizes.header.push_back("t(s)");
  for (const auto &p : pools) {
    std::vector<std::string> row = {field(p, "function"), field(p, "profile"), field(p, "mode"),
                                    gap_percent(p), std::to_string(p.programs.size()),
                                    field(p, "reason"), field(p, "best")};
    if (timing) {
      std::ostringstream t;
      t << std::fixed << std::setprecision(2) << p.total_secs.value_or(0);
      row.push_back(t.str());
    }
    sizes.rows.push_back(std::move(row));
  }
  section("pools", sizes);
  section("gadgets", gadget_table(pools));

  Table breakage;
  breakage.header = {"function", "profile", "base_mode", "N", "cr_violation%", "rot_leak%",
                     "mismatch%"};
  for (const auto &p : pools) {
    if (field(p, "mode") != "naive")
      continue;
    auto verdicts = verify_pool(p);
    std::int64_t cr = 0, leak = 0, eq = 0;
    for (const auto &v : verdicts) {
      cr += v.cr && !v.cr->secure() ? 1 : 0;
      leak += v.psc && v.psc->complete && !v.psc->secure() ? 1 : 0;
      eq += v.equivalence.ok() ? 0 : 1;
    }
    Rational n(std::max<std::int64_t>(1, static_cast<std::int64_t>(verdicts.size())));
    breakage.rows.push_back({field(p, "function"), field(p, "profile"), field(p, "checks"),
                             std::to_string(verdicts.size()),
                             p.checks() == SecMode::Tsc ? percent(Rational(cr) / n) : "-",
                             p.checks() == SecMode::Psc ? percent(Rational(leak) / n) : "-",
                             percent(Rational(eq) / n)});
  }
  section("naive breakage", breakage);
  return os.str();
}

} // namespace secdiv
