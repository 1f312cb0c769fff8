#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "srknots/cli.hpp"
#include "srknots/knots.hpp"
#include "srknots/sr_model.hpp"

using namespace srknots;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int c = run_cli(args, o, e);
  return {c, o.str(), e.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch() {
  const fs::path d = fs::temp_directory_path() / "srknots_cli_test";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("simulate writes a valid observation") {
  const auto path = (scratch() / "obs.json").string();
  const Run r = run({"simulate", "--fc", "7", "--spike", "1.0:3.14", "--sigma", "1", "--seed",
                     "7", "--out", path});
  REQUIRE(r.code == 0);
  const Observation o = load_observation(path);
  CHECK(o.fc == 7);
  CHECK(o.y.size() == 15);
  REQUIRE(o.sigma.has_value());
  CHECK(*o.sigma == 1.0);
  const std::string first = slurp(path);
  REQUIRE(run({"simulate", "--fc", "7", "--spike", "1.0:3.14", "--sigma", "1", "--seed", "7",
               "--out", path})
              .code == 0);
  CHECK(slurp(path) == first);
}

TEST_CASE("test reports shape and studentization") {
  const auto known = (scratch() / "known.json").string();
  const auto hidden = (scratch() / "hidden.json").string();
  REQUIRE(run({"simulate", "--fc", "3", "--sigma", "1", "--seed", "4", "--out", known}).code == 0);
  REQUIRE(run({"simulate", "--fc", "3", "--sigma", "1", "--seed", "4", "--hide-sigma", "--out",
               hidden})
              .code == 0);

  const Run r = run({"test", "--stat", "rice", "--obs", known, "--sigma", "1"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["name"] == "rice");
  CHECK(j["value"].get<double>() >= 0.0);
  CHECK(j["value"].get<double>() <= 1.0);
  const auto cert = compute_certificate(load_observation(known));
  CHECK(j["lambda1"].get<double>() == cert.lambda1);
  CHECK(j["lambda2"].get<double>() == cert.lambda2);

  const Run t = run({"test", "--stat", "rice", "--obs", hidden});
  REQUIRE(t.code == 0);
  const json jt = json::parse(t.out);
  CHECK(jt["name"] == "t_rice");
  CHECK(jt["studentized"] == true);
  CHECK(jt["dof"] == 11);

  for (const char* s : {"st", "grid", "t-grid", "grid-st", "t-rice"}) {
    const Run q = run({"test", "--stat", s, "--obs", known, "--sigma", "1", "--seed", "2",
                       "--grid", "10"});
    CHECK(q.code == 0);
    const double v = json::parse(q.out)["value"].get<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-9);
  }
  CHECK(run({"test", "--stat", "grid", "--obs", known, "--sigma", "1", "--seed", "2"}).out ==
        run({"test", "--stat", "grid", "--obs", known, "--sigma", "1", "--seed", "2"}).out);
}

TEST_CASE("knots and lars") {
  const auto obs = (scratch() / "k.json").string();
  REQUIRE(run({"simulate", "--fc", "3", "--sigma", "1", "--seed", "42", "--out", obs}).code == 0);
  const Run k = run({"knots", "--obs", obs});
  REQUIRE(k.code == 0);
  const json jk = json::parse(k.out);
  CHECK(jk["lambda1"].get<double>() > jk["lambda2"].get<double>());

  const auto csv = (scratch() / "path.csv").string();
  const Run l = run({"lars", "--obs", obs, "--sigma", "1", "--kmax", "3", "--out", csv});
  REQUIRE(l.code == 0);
  const json jl = json::parse(l.out);
  CHECK(jl["knots"].size() == 3);
  CHECK(jl["knots"][0]["lambda"].get<double>() == jk["lambda1"].get<double>());
  CHECK(slurp(csv).rfind("k,lambda,t,re_a,im_a\n", 0) == 0);
}

TEST_CASE("calibrate, power and reproduce") {
  const Run c = run({"calibrate", "--fc", "3", "--stat", "rice", "--stat", "st", "--seed", "1",
                     "--reps", "20"});
  REQUIRE(c.code == 0);
  const json jc = json::parse(c.out);
  CHECK(jc["results"].size() == 2);
  CHECK(jc["excluded"] == 0);

  const auto csv = (scratch() / "power.csv").string();
  const Run p = run({"power", "--fc", "3", "--stat", "rice", "--seed", "1", "--reps", "10",
                     "--alt", "sqrtn", "--out", csv});
  REQUIRE(p.code == 0);
  CHECK(slurp(csv).rfind("rep,statistic,value,fc,sigma_mode,alt_id,seed\n", 0) == 0);

  const fs::path dir = scratch() / "figs";
  fs::remove_all(dir);
  const Run f = run({"reproduce", "fig3", "--seed", "1", "--reps", "10", "--out", dir.string()});
  REQUIRE(f.code == 0);
  for (int k = 1; k <= 3; ++k) {
    CHECK(fs::exists(dir / "fig3" / ("panel_" + std::to_string(k) + ".csv")));
    CHECK(fs::exists(dir / "fig3" / ("panel_" + std::to_string(k) + ".svg")));
  }
}

TEST_CASE("exit codes") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"simulate", "--fc", "3"}).code == 2);
  CHECK(run({"simulate", "--fc", "0", "--sigma", "1", "--seed", "1"}).code == 2);
  CHECK(run({"test", "--stat", "bogus", "--obs", "x.json"}).code == 2);
  CHECK(run({"knots", "--obs", (scratch() / "absent.json").string()}).code == 2);

  const auto bad = (scratch() / "bad.json").string();
  std::ofstream(bad) << "{\"fc\": 3, \"sigma\": 1, \"y\": [[1, 0]]}";
  CHECK(run({"knots", "--obs", bad}).code == 2);

  // an identically zero observation has no first knot
  const auto zero = (scratch() / "zero.json").string();
  Observation o;
  o.fc = 2;
  o.y.assign(5, cplx(0.0, 0.0));
  o.sigma = 1.0;
  save_observation(o, zero);
  const Run r = run({"knots", "--obs", zero});
  CHECK(r.code == 1);
  CHECK(!r.err.empty());
}
