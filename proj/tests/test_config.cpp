#include "qhx/commands.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qhx;
using config::Command;
using config::ConfigError;
using config::Json;
namespace fs = std::filesystem;

namespace {

Json base_doc() {
  return Json::parse(R"({
    "engine": {"E_c": 1.0, "E_h": 4.0},
    "terminals": {"T_c": 1.0, "T_h": 20.0, "battery": 0.47739264162957207},
    "couplings": {"eps_c": 1.0, "eps_h": 1.0, "eps_w": 1.0, "tau_cyc": 0.1}
  })");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qhx_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const Json& doc) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& sub, const fs::path& cfg, const fs::path& out) {
  const std::string cmd = std::string("\"") + QHX_CLI_PATH + "\" " + sub + " --config \"" + cfg.string() +
                          "\" --out \"" + out.string() + "\" > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Json manifest_of(const fs::path& out) { return Json::parse(slurp(out / "manifest.json")); }

}  // namespace

TEST(ConfigParse, Defaults) {
  const auto c = config::parse(base_doc(), Command::sweep_power);
  EXPECT_EQ(c.type, MachineType::two_stroke);
  EXPECT_EQ(c.grid.size(), 16u);
  EXPECT_EQ(c.types.front(), MachineType::simultaneous);
  EXPECT_EQ(c.battery.kind, config::BatterySetting::Kind::population);
  EXPECT_TRUE(c.wants("csv"));
  const auto e = config::parse(base_doc(), Command::equivalence_order);
  EXPECT_EQ(e.fit_window.size(), 12u);
  EXPECT_DOUBLE_EQ(e.yoshida_window.back(), 0.3);
}

TEST(ConfigParse, SimultaneousReferenceAlwaysIncluded) {
  Json d = base_doc();
  d["experiment"] = {{"types", {"FourStroke"}}};
  const auto c = config::parse(d, Command::sweep_power);
  ASSERT_EQ(c.types.size(), 2u);
  EXPECT_EQ(c.types[0], MachineType::simultaneous);
}

TEST(ConfigParse, RejectsUnknownKeys) {
  Json d = base_doc();
  d["engine"]["E_x"] = 2.0;
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
  d = base_doc();
  d["extra"] = 1;
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
}

TEST(ConfigParse, RejectsInvalidValues) {
  Json d = base_doc();
  d["experiment"] = {{"grid", {{"values", Json::array()}}}};
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
  d["experiment"] = {{"grid", {{"values", {0.2, 0.1}}}}};
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
  d = base_doc();
  d["machine"] = {{"type", "SevenStroke"}};
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
  d = base_doc();
  d["terminals"]["battery"] = 1.5;
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
  d = base_doc();
  d["engine"]["E_h"] = 0.5;
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
  d = base_doc();
  d["couplings"]["tau_cyc"] = 0.0;
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
}

TEST(ConfigParse, QutritOnlyForBattery) {
  Json d = base_doc();
  d["terminals"]["battery"] = "qutrit";
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
  EXPECT_NO_THROW(config::parse(d, Command::battery));
}

TEST(ConfigParse, FitWindowLimits) {
  Json d = base_doc();
  d["experiment"] = {{"fit_window", {{"min", 1e-2}, {"max", 0.5}, {"points", 8}}}};
  EXPECT_THROW(config::parse(d, Command::equivalence_order), ConfigError);
  d["experiment"] = {{"fit_window", {{"min", 1e-2}, {"max", 0.1}, {"points", 4}}}};
  EXPECT_THROW(config::parse(d, Command::equivalence_order), ConfigError);
  d["experiment"] = {{"fit_window", {{"min", 1e-2}, {"max", 0.1}, {"points", 7}}}};
  EXPECT_EQ(config::parse(d, Command::equivalence_order).fit_window.size(), 7u);
}

TEST(ConfigParse, ExperimentNameMustMatchCommand) {
  Json d = base_doc();
  d["experiment"] = {{"name", "battery"}};
  EXPECT_THROW(config::parse(d, Command::sweep_power), ConfigError);
  EXPECT_NO_THROW(config::parse(d, Command::battery));
}

TEST(ConfigParse, BatteryPopulationsValidated) {
  Json d = base_doc();
  d["experiment"] = {{"populations", {0.2, 0.3, 0.4}}};
  EXPECT_THROW(config::parse(d, Command::battery), ConfigError);
  d["experiment"] = {{"populations", {0.2, 0.3, 0.5}}};
  EXPECT_NO_THROW(config::parse(d, Command::battery));
}

TEST(ConfigParse, ShippedConfigsLoad) {
  const fs::path root = QHX_SOURCE_DIR;
  for (auto cmd : {Command::sweep_power, Command::equivalence_order, Command::signature, Command::battery}) {
    EXPECT_NO_THROW(config::load((root / "configs/default.json").string(), cmd));
  }
  EXPECT_NO_THROW(config::load((root / "configs/population_battery.json").string(), Command::battery));
  EXPECT_NO_THROW(config::load((root / "configs/qutrit_battery.json").string(), Command::battery));
  EXPECT_THROW(config::load((root / "configs/missing.json").string(), Command::battery), ConfigError);
}

TEST(Csv, FormatsRoundTrip) {
  EXPECT_EQ(commands::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(commands::format_double(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(commands::format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(Cli, SweepWritesArtifactsAndIsDeterministic) {
  const fs::path dir = scratch("sweep");
  Json d = base_doc();
  d["experiment"] = {{"grid", {{"min", 1e-2}, {"max", 0.5}, {"points", 4}}}};
  const auto cfg = write_config(dir, d);
  ASSERT_EQ(run_cli("sweep-power", cfg, dir / "a"), 0);
  ASSERT_EQ(run_cli("sweep-power", cfg, dir / "b"), 0);
  for (const char* f : {"sweep.csv", "normalized.csv"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  auto ma = manifest_of(dir / "a"), mb = manifest_of(dir / "b");
  EXPECT_EQ(ma["status"], "ok");
  EXPECT_EQ(ma["exit_code"], 0);
  ma.erase("wall_time_s");
  mb.erase("wall_time_s");
  EXPECT_EQ(ma.dump(), mb.dump());
}

TEST(Cli, EmptyGridIsConfigErrorWithManifestOnly) {
  const fs::path dir = scratch("empty");
  Json d = base_doc();
  d["experiment"] = {{"grid", {{"values", Json::array()}}}};
  ASSERT_EQ(run_cli("sweep-power", write_config(dir, d), dir / "out"), 2);
  ASSERT_TRUE(fs::exists(dir / "out" / "manifest.json"));
  EXPECT_FALSE(fs::exists(dir / "out" / "sweep.csv"));
  const auto m = manifest_of(dir / "out");
  EXPECT_EQ(m["status"], "config_error");
  EXPECT_TRUE(m.contains("error"));
}

TEST(Cli, UnreadableConfigStillWritesManifest) {
  const fs::path dir = scratch("missing");
  ASSERT_EQ(run_cli("battery", dir / "nope.json", dir / "out"), 2);
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Cli, SinglePointBatteryGrid) {
  const fs::path dir = scratch("battery1");
  Json d = base_doc();
  d["experiment"] = {{"grid", {{"values", {0.7}}}}, {"populations", {0.2, 0.3, 0.5}}};
  ASSERT_EQ(run_cli("battery", write_config(dir, d), dir / "out"), 0);
  const std::string csv = slurp(dir / "out" / "battery.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Cli, FitWindowOverrideIsUsed) {
  const fs::path dir = scratch("orders");
  Json d = base_doc();
  d["experiment"] = {{"types", {"TwoStroke"}}, {"fit_window", {{"min", 2e-3}, {"max", 5e-2}, {"points", 7}}}};
  ASSERT_EQ(run_cli("equivalence-order", write_config(dir, d), dir / "out"), 0);
  const Json orders = Json::parse(slurp(dir / "out" / "orders.json"));
  const std::string text = orders.dump();
  EXPECT_NE(text.find("\"points\":7"), std::string::npos);
  EXPECT_NE(text.find("0.002"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  const std::string cmd = std::string("\"") + QHX_CLI_PATH + "\" sweep-power > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}
