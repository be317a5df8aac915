#include <doctest.h>

#include <mvlme/csv.hpp>
#include <mvlme/simulate.hpp>

#include <cstdio>
#include <fstream>
#include <string>

using namespace mvlme;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content = "")
        : path("/tmp/mvlme_test_" + name) {
        if (!content.empty()) {
            std::ofstream out(path);
            out << content;
        }
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_csv: handcrafted file with two groups") {
    TempFile f("hand.csv",
               "id,weight,height,sex,Nscore,age\n"
               "a,10,20,0,30,25\n"
               "a,11,21,0,31,19\n"
               "b,12,22,1,32,33\n"
               "b,13,23,1,47,28\n");
    GroupedBivariateData d = load_csv(f.path, default_model_spec());
    CHECK(d.n_obs() == 4);
    CHECK(d.n_groups() == 2);
    CHECK(d.group_sizes == std::vector<int>{2, 2});
    CHECK(d.p(0) == 4);
    CHECK(d.t(0) == 2);
    CHECK(d.dims[0].y(0) == 10.0);
    CHECK(d.dims[1].y(3) == 23.0);
    CHECK(d.dims[0].X(2, 0) == 1.0);   // intercept keyword
    CHECK(d.dims[0].X(2, 1) == 1.0);   // sex
    CHECK(d.dims[0].X(2, 2) == 32.0);  // Nscore
    CHECK(d.dims[1].Z[1](1, 1) == 47.0);
}

TEST_CASE("load_csv: groups collect in first-appearance order across interleaved rows") {
    TempFile f("interleave.csv",
               "id,weight,height,sex,Nscore,age\n"
               "g2,1,2,0,30,36\n"
               "g1,3,4,1,31,21\n"
               "g2,5,6,0,44,22\n"
               "g1,7,8,1,33,29\n");
    GroupedBivariateData d = load_csv(f.path, default_model_spec());
    CHECK(d.n_groups() == 2);
    // group 0 is g2 (first appearance), rows kept in input order
    CHECK(d.dims[0].y(0) == 1.0);
    CHECK(d.dims[0].y(1) == 5.0);
    CHECK(d.dims[0].y(2) == 3.0);
    CHECK(d.dims[0].y(3) == 7.0);
}

TEST_CASE("load_csv error paths carry coordinates") {
    TempFile bad("bad.csv",
                 "id,weight,height,sex,Nscore,age\n"
                 "a,10,20,0,30,25\n"
                 "a,11,21,0,31,26\n"
                 "b,oops,22,1,32,27\n");
    try {
        load_csv(bad.path, default_model_spec());
        CHECK(false);
    } catch (const LoadError& e) {
        CHECK(e.row == 3);
        CHECK(e.column == "weight");
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }

    TempFile missing("missing.csv",
                     "id,weight,height,sex,Nscore,age\n"
                     "a,10,20,0,30,25\n"
                     "a,11,,0,31,26\n");
    try {
        load_csv(missing.path, default_model_spec());
        CHECK(false);
    } catch (const LoadError& e) {
        CHECK(e.row == 2);
        CHECK(e.column == "height");
    }

    TempFile nocol("nocol.csv", "id,weight,sex,Nscore,age\na,1,0,30,20\n");
    CHECK_THROWS_AS(load_csv(nocol.path, default_model_spec()), LoadError);
}

TEST_CASE("simulate -> write -> load round trip is exact") {
    SimConfig c = default_config();
    c.n_total = 80;
    c.n_groups = 8;
    c.seed = 21;
    GroupedBivariateData d = simulate(c);
    TempFile f("roundtrip.csv");
    write_dataset_csv(f.path, d);
    GroupedBivariateData r = load_csv(f.path, default_model_spec());
    CHECK(r.group_sizes == d.group_sizes);
    for (int k = 0; k < 2; ++k) {
        CHECK(r.dims[static_cast<std::size_t>(k)].y == d.dims[static_cast<std::size_t>(k)].y);
        CHECK(r.dims[static_cast<std::size_t>(k)].X == d.dims[static_cast<std::size_t>(k)].X);
        for (int i = 0; i < d.n_groups(); ++i) {
            CHECK(r.dims[static_cast<std::size_t>(k)].Z[static_cast<std::size_t>(i)] ==
                  d.dims[static_cast<std::size_t>(k)].Z[static_cast<std::size_t>(i)]);
        }
    }
}

TEST_CASE("model spec JSON parsing and validation") {
    const std::string good = R"({
        "group": "id",
        "dim1": {"response": "weight", "fixed": ["1", "sex"], "random": ["1"]},
        "dim2": {"response": "height", "fixed": ["1", "age"], "random": ["1"]},
        "criterion": "reml",
        "init": "naive"
    })";
    ModelSpec spec = model_spec_from_json(good);
    CHECK(spec.criterion == FitCriterion::reml);
    CHECK(spec.init == InitMode::naive);
    CHECK(spec.dim1.response == "weight");

    const std::string dup = R"({
        "group": "id",
        "dim1": {"response": "weight", "fixed": ["sex", "sex"], "random": ["1"]},
        "dim2": {"response": "height", "fixed": ["1"], "random": ["1"]}
    })";
    CHECK_THROWS_AS(model_spec_from_json(dup), LoadError);

    const std::string explicit_init = R"({
        "group": "id",
        "dim1": {"response": "weight", "fixed": ["1"], "random": ["1"]},
        "dim2": {"response": "height", "fixed": ["1"], "random": ["1"]},
        "init": {"theta1": [1.0], "theta2": [1.0], "rho": [[0.1]],
                 "sigma1": 2.0, "sigma2": 3.0}
    })";
    ModelSpec espec = model_spec_from_json(explicit_init);
    CHECK(espec.init == InitMode::explicit_values);
    REQUIRE(espec.init_values.has_value());
    CHECK(espec.init_values->sigma2 == 3.0);
}

TEST_CASE("sim config JSON honors defaults for omitted fields") {
    SimConfig c = sim_config_from_json(R"({"N": 100, "n": 10, "seed": 7})");
    CHECK(c.n_total == 100);
    CHECK(c.n_groups == 10);
    CHECK(c.seed == 7);
    CHECK(c.beta1(2) == 14.00);       // default working values retained
    CHECK(c.gamma_bar(2, 2) == 97.81);
    CHECK(c.sigma2 == 7.60);
}
