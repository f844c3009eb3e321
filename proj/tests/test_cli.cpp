#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int run_cmd(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "lanesim_cli_test";
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const std::string& name, bool with_sweep) {
  nlohmann::json doc;
  doc["network"]["grid"] = {{"rows", 3},          {"cols", 3},
                            {"block_len_m", 150}, {"two_lane_share", 0.5},
                            {"signalized_share", 0.5}, {"seed", 11}};
  doc["demand"]["od"]["uniform_boundary_total_veh_h"] = 700.0;
  doc["demand"]["horizon_s"] = 900.0;
  doc["demand"]["profile"] = {{"kind", "inflated"}, {"start_factor", 1.0},
                              {"peak_factor", 1.0},  {"ramp_hours", 0.2},
                              {"hold_hours", 0.1}};
  doc["engine"] = {{"seed", 3}, {"measure_interval_s", 300.0}};
  doc["fleet"]["av_penetration"] = 0.5;
  if (with_sweep) {
    doc["sweep"] = {{"penetrations", {0.0, 0.5, 1.0}}, {"seeds", 2}, {"seed_base", 10}};
  }
  const fs::path path = work_dir() / name;
  std::ofstream(path) << doc.dump(2);
  return path;
}

const std::string bin = LANESIM_BIN;

bool lanesim_test_is_run_dir(const std::string& name) {
  return name.size() > 1 && name[0] == 'p' && std::isdigit(static_cast<unsigned char>(name[1]));
}

}  // namespace

TEST_CASE("run: valid config exits 0 and writes the run artifacts") {
  const auto cfg = write_config("run_cfg.json", false);
  const fs::path out = work_dir() / "run_out";
  fs::remove_all(out);
  REQUIRE(run_cmd(bin + " run --config " + cfg.string() + " --out " + out.string()) == 0);
  for (const char* name : {"lane_changes.csv", "edges.csv", "trips.csv", "counters.json",
                           "resolved_config.json"})
    REQUIRE(fs::exists(out / name));
  bool has_mfd = false;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().filename().string().rfind("mfd_", 0) == 0) has_mfd = true;
  REQUIRE(has_mfd);
}

TEST_CASE("run: missing network file exits 1") {
  nlohmann::json doc;
  doc["network"]["file"] = "/nonexistent/net.json";
  doc["demand"]["od"]["uniform_boundary_total_veh_h"] = 100.0;
  doc["demand"]["horizon_s"] = 60.0;
  const fs::path cfg = work_dir() / "missing_net.json";
  std::ofstream(cfg) << doc.dump(2);
  REQUIRE(run_cmd(bin + " run --config " + cfg.string() + " --out " +
                  (work_dir() / "nope").string()) == 1);
}

TEST_CASE("run: malformed config exits 1") {
  const fs::path cfg = work_dir() / "broken.json";
  std::ofstream(cfg) << "{ not json";
  REQUIRE(run_cmd(bin + " run --config " + cfg.string() + " --out " +
                  (work_dir() / "nope2").string()) == 1);
}

TEST_CASE("run: identical invocations give identical artifacts") {
  const auto cfg = write_config("det_cfg.json", false);
  const fs::path o1 = work_dir() / "det1";
  const fs::path o2 = work_dir() / "det2";
  fs::remove_all(o1);
  fs::remove_all(o2);
  REQUIRE(run_cmd(bin + " run --config " + cfg.string() + " --seed 44 --out " + o1.string()) == 0);
  REQUIRE(run_cmd(bin + " run --config " + cfg.string() + " --seed 44 --out " + o2.string()) == 0);
  for (const char* name : {"lane_changes.csv", "edges.csv", "trips.csv", "counters.json"}) {
    REQUIRE(slurp(o1 / name) == slurp(o2 / name));
    REQUIRE(!slurp(o1 / name).empty());
  }
}

TEST_CASE("sweep: runs the matrix, reports, plots; parallelism-independent") {
  const auto spec = write_config("sweep_cfg.json", true);
  const fs::path o1 = work_dir() / "sweep1";
  const fs::path o2 = work_dir() / "sweep2";
  fs::remove_all(o1);
  fs::remove_all(o2);
  REQUIRE(run_cmd(bin + " sweep --spec " + spec.string() + " --jobs 1 --out " + o1.string()) == 0);
  REQUIRE(run_cmd(bin + " sweep --spec " + spec.string() + " --jobs 4 --out " + o2.string()) == 0);

  int dirs = 0;
  for (const auto& e : fs::directory_iterator(o1))
    if (e.is_directory() && lanesim_test_is_run_dir(e.path().filename().string())) ++dirs;
  REQUIRE(dirs == 6);  // 3 penetrations x 2 seeds
  REQUIRE(fs::exists(o1 / "report.csv"));
  REQUIRE(fs::exists(o1 / "plots" / "lane_change_relative.svg"));
  REQUIRE(fs::exists(o1 / "plots" / "av_share_diagonal.svg"));
  REQUIRE(fs::exists(o1 / "plots" / "efficiency_relative.svg"));
  REQUIRE(fs::exists(o1 / "plots" / "mfd_p050.svg"));

  const std::string r1 = slurp(o1 / "report.csv");
  REQUIRE(!r1.empty());
  REQUIRE(r1 == slurp(o2 / "report.csv"));
}

TEST_CASE("report: recomputation is idempotent; corrupt run dirs fail loudly") {
  const fs::path sweep_dir = work_dir() / "sweep1";
  REQUIRE(fs::exists(sweep_dir / "report.csv"));  // produced by the sweep test
  const std::string original = slurp(sweep_dir / "report.csv");
  REQUIRE(run_cmd(bin + " report --runs " + sweep_dir.string()) == 0);
  REQUIRE(slurp(sweep_dir / "report.csv") == original);

  // Corrupt one run directory: report must exit nonzero.
  const fs::path corrupt = work_dir() / "sweep_corrupt";
  fs::remove_all(corrupt);
  fs::create_directories(corrupt);
  fs::copy(sweep_dir, corrupt, fs::copy_options::recursive);
  bool truncated = false;
  for (const auto& e : fs::directory_iterator(corrupt)) {
    if (e.is_directory() && lanesim_test_is_run_dir(e.path().filename().string())) {
      std::ofstream(e.path() / "trips.csv", std::ios::trunc);
      truncated = true;
      break;
    }
  }
  REQUIRE(truncated);
  REQUIRE(run_cmd(bin + " report --runs " + corrupt.string()) != 0);
}

TEST_CASE("plot: emits SVGs from saved runs and fails on an empty MFD file") {
  const fs::path sweep_dir = work_dir() / "sweep1";
  const fs::path plots = work_dir() / "plots_out";
  fs::remove_all(plots);
  REQUIRE(run_cmd(bin + " plot --runs " + sweep_dir.string() + " --out " + plots.string()) == 0);
  REQUIRE(fs::exists(plots / "av_share_diagonal.svg"));

  const fs::path broken = work_dir() / "sweep_empty_mfd";
  fs::remove_all(broken);
  fs::create_directories(broken);
  fs::copy(sweep_dir, broken, fs::copy_options::recursive);
  for (const auto& e : fs::directory_iterator(broken)) {
    if (e.is_directory() && lanesim_test_is_run_dir(e.path().filename().string())) {
      for (const auto& f : fs::directory_iterator(e.path()))
        if (f.path().filename().string().rfind("mfd_", 0) == 0)
          std::ofstream(f.path(), std::ios::trunc) << "interval,K,Q_literal,Q_length_weighted,phase\n";
      break;
    }
  }
  REQUIRE(run_cmd(bin + " plot --runs " + broken.string() + " --out " +
                  (work_dir() / "plots_broken").string()) != 0);
}
