#include "mvlme/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mvlme {

using nlohmann::json;

bool is_intercept_keyword(const std::string& name) { return name == "1" || name == "intercept"; }

// ----- model spec ----------------------------------------------------------------

namespace {

void check_role(const std::vector<std::string>& cols, const std::string& role) {
    std::set<std::string> seen;
    for (const auto& c : cols) {
        if (!seen.insert(c).second) {
            throw LoadError("duplicate column '" + c + "' in " + role);
        }
    }
}

}  // namespace

void ModelSpec::validate() const {
    if (group_column.empty()) throw LoadError("model spec: group column is required");
    for (const DimensionSpec* d : {&dim1, &dim2}) {
        if (d->response.empty()) throw LoadError("model spec: response column is required");
        if (d->fixed.empty()) throw LoadError("model spec: at least one fixed column is required");
        if (d->random.empty()) throw LoadError("model spec: at least one random column is required");
    }
    check_role(dim1.fixed, "dim1 fixed");
    check_role(dim1.random, "dim1 random");
    check_role(dim2.fixed, "dim2 fixed");
    check_role(dim2.random, "dim2 random");
    if (init == InitMode::explicit_values) {
        if (!init_values) throw LoadError("model spec: explicit init requires values");
        init_values->validate();
    }
}

namespace {

DimensionSpec dim_spec_from_json(const json& j) {
    DimensionSpec d;
    d.response = j.at("response").get<std::string>();
    d.fixed = j.at("fixed").get<std::vector<std::string>>();
    d.random = j.at("random").get<std::vector<std::string>>();
    return d;
}

VarianceParams params_from_json(const json& j) {
    VarianceParams p;
    auto t1v = j.at("theta1").get<std::vector<double>>();
    auto t2v = j.at("theta2").get<std::vector<double>>();
    p.theta1 = Eigen::Map<Eigen::VectorXd>(t1v.data(), static_cast<Eigen::Index>(t1v.size()));
    p.theta2 = Eigen::Map<Eigen::VectorXd>(t2v.data(), static_cast<Eigen::Index>(t2v.size()));
    auto rows = j.at("rho").get<std::vector<std::vector<double>>>();
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    p.rho.resize(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c) {
            throw LoadError("model spec: ragged rho matrix");
        }
        for (Eigen::Index k = 0; k < c; ++k) {
            p.rho(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        }
    }
    p.sigma1 = j.at("sigma1").get<double>();
    p.sigma2 = j.at("sigma2").get<double>();
    return p;
}

}  // namespace

ModelSpec model_spec_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw LoadError(std::string("model spec: invalid JSON: ") + e.what());
    }
    ModelSpec spec;
    try {
        spec.group_column = j.at("group").get<std::string>();
        spec.dim1 = dim_spec_from_json(j.at("dim1"));
        spec.dim2 = dim_spec_from_json(j.at("dim2"));
        if (j.contains("criterion")) {
            const std::string c = j["criterion"].get<std::string>();
            if (c == "ml") spec.criterion = FitCriterion::ml;
            else if (c == "reml") spec.criterion = FitCriterion::reml;
            else throw LoadError("model spec: criterion must be 'ml' or 'reml'");
        }
        if (j.contains("init")) {
            const json& ji = j["init"];
            if (ji.is_string()) {
                const std::string m = ji.get<std::string>();
                if (m == "naive") spec.init = InitMode::naive;
                else if (m == "advised") spec.init = InitMode::advised;
                else throw LoadError("model spec: init must be 'naive', 'advised', or explicit values");
            } else {
                spec.init = InitMode::explicit_values;
                spec.init_values = params_from_json(ji);
            }
        }
    } catch (const json::exception& e) {
        throw LoadError(std::string("model spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

ModelSpec model_spec_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open model spec file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return model_spec_from_json(ss.str());
}

ModelSpec default_model_spec() {
    ModelSpec spec;
    spec.group_column = "id";
    spec.dim1 = {"weight", {"1", "sex", "Nscore", "age"}, {"1", "Nscore"}};
    spec.dim2 = {"height", {"1", "sex", "Nscore", "age"}, {"1", "Nscore"}};
    return spec;
}

// ----- CSV ingestion ---------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, int row, const std::string& column) {
    const std::string s = trim(raw);
    if (s.empty()) {
        throw LoadError(row, column, "missing value at row " + std::to_string(row) +
                                         ", column '" + column + "'");
    }
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        throw LoadError(row, column, "non-numeric value '" + s + "' at row " +
                                         std::to_string(row) + ", column '" + column + "'");
    }
    return v;
}

int column_of(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    throw LoadError("missing column '" + name + "'");
}

}  // namespace

GroupedBivariateData load_csv(const std::string& path, const ModelSpec& spec) {
    spec.validate();
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open data file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw LoadError("empty file: " + path);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    {
        std::set<std::string> seen;
        for (const auto& h : header) {
            if (!seen.insert(h).second) throw LoadError("duplicate column '" + h + "' in header");
        }
    }

    const int group_col = column_of(header, spec.group_column);
    struct DimCols {
        int response;
        std::vector<int> fixed;   // -1 marks the intercept keyword
        std::vector<int> random;
    };
    auto resolve = [&](const DimensionSpec& d) {
        DimCols dc;
        dc.response = column_of(header, d.response);
        for (const auto& c : d.fixed) {
            dc.fixed.push_back(is_intercept_keyword(c) ? -1 : column_of(header, c));
        }
        for (const auto& c : d.random) {
            dc.random.push_back(is_intercept_keyword(c) ? -1 : column_of(header, c));
        }
        return dc;
    };
    const DimCols cols[2] = {resolve(spec.dim1), resolve(spec.dim2)};

    // First pass: rows as parsed numbers, grouped by the group label in order
    // of first appearance; input order preserved within groups.
    std::vector<std::string> group_labels;
    std::vector<std::vector<int>> group_rows;
    std::vector<std::vector<double>> cells;
    int data_row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++data_row;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw LoadError(data_row, "", "row " + std::to_string(data_row) + " has " +
                                              std::to_string(fields.size()) + " fields, expected " +
                                              std::to_string(header.size()));
        }
        const std::string label = trim(fields[static_cast<std::size_t>(group_col)]);
        if (label.empty()) {
            throw LoadError(data_row, spec.group_column,
                            "missing group label at row " + std::to_string(data_row));
        }
        int g = -1;
        for (std::size_t i = 0; i < group_labels.size(); ++i) {
            if (group_labels[i] == label) {
                g = static_cast<int>(i);
                break;
            }
        }
        if (g < 0) {
            g = static_cast<int>(group_labels.size());
            group_labels.push_back(label);
            group_rows.emplace_back();
        }
        std::vector<double> row(header.size(), 0.0);
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (static_cast<int>(c) == group_col) continue;
            row[c] = parse_cell(fields[c], data_row, header[c]);
        }
        group_rows[static_cast<std::size_t>(g)].push_back(static_cast<int>(cells.size()));
        cells.push_back(std::move(row));
    }
    if (cells.empty()) throw LoadError("no data rows in " + path);

    GroupedBivariateData data;
    const int n = static_cast<int>(group_labels.size());
    data.group_sizes.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        data.group_sizes[static_cast<std::size_t>(i)] =
            static_cast<int>(group_rows[static_cast<std::size_t>(i)].size());
    }
    data.rebuild_indexing();
    const int N = data.n_obs();

    for (int k = 0; k < 2; ++k) {
        DimensionDesign& d = data.dims[static_cast<std::size_t>(k)];
        const DimCols& dc = cols[k];
        d.t = static_cast<int>(dc.random.size());
        d.y.resize(N);
        d.X.resize(N, static_cast<Eigen::Index>(dc.fixed.size()));
        d.Z.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int off = data.group_offsets[static_cast<std::size_t>(i)];
            const int ni = data.group_sizes[static_cast<std::size_t>(i)];
            Eigen::MatrixXd zb(ni, d.t);
            for (int r = 0; r < ni; ++r) {
                const auto& row = cells[static_cast<std::size_t>(
                    group_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)])];
                d.y(off + r) = row[static_cast<std::size_t>(dc.response)];
                for (std::size_t c = 0; c < dc.fixed.size(); ++c) {
                    d.X(off + r, static_cast<Eigen::Index>(c)) =
                        dc.fixed[c] < 0 ? 1.0 : row[static_cast<std::size_t>(dc.fixed[c])];
                }
                for (std::size_t c = 0; c < dc.random.size(); ++c) {
                    zb(r, static_cast<Eigen::Index>(c)) =
                        dc.random[c] < 0 ? 1.0 : row[static_cast<std::size_t>(dc.random[c])];
                }
            }
            d.Z[static_cast<std::size_t>(i)] = zb;
        }
    }
    data.validate();
    return data;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_dataset_csv(const std::string& path, const GroupedBivariateData& data) {
    if (data.p(0) != 4 || data.t(0) != 2) {
        throw ShapeError("write_dataset_csv expects the working design (4 fixed, 2 random columns)");
    }
    std::ofstream out(path);
    if (!out) throw LoadError("cannot open output file: " + path);
    out << "id,weight,height,sex,Nscore,age\n";
    const int N = data.n_obs();
    for (int r = 0; r < N; ++r) {
        out << data.group_index[static_cast<std::size_t>(r)] + 1 << ','
            << fmt_double(data.dims[0].y(r)) << ',' << fmt_double(data.dims[1].y(r)) << ','
            << fmt_double(data.dims[0].X(r, 1)) << ',' << fmt_double(data.dims[0].X(r, 2)) << ','
            << fmt_double(data.dims[0].X(r, 3)) << '\n';
    }
    if (!out) throw LoadError("failed writing " + path);
}

// ----- simulation config and truth sidecar --------------------------------------------

namespace {

Eigen::MatrixXd matrix_from_json(const json& j) {
    auto rows = j.get<std::vector<std::vector<double>>>();
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c) {
            throw LoadError("ragged matrix in config");
        }
        for (Eigen::Index k = 0; k < c; ++k) {
            m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        }
    }
    return m;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(row);
    }
    return rows;
}

Eigen::VectorXd vector_from_json(const json& j) {
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

}  // namespace

SimConfig sim_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw LoadError(std::string("sim config: invalid JSON: ") + e.what());
    }
    SimConfig c = default_config();
    try {
        if (j.contains("N")) c.n_total = j["N"].get<int>();
        if (j.contains("n")) c.n_groups = j["n"].get<int>();
        if (j.contains("beta1")) c.beta1 = vector_from_json(j["beta1"]);
        if (j.contains("beta2")) c.beta2 = vector_from_json(j["beta2"]);
        if (j.contains("gamma_bar")) c.gamma_bar = matrix_from_json(j["gamma_bar"]);
        if (j.contains("sigma1")) c.sigma1 = j["sigma1"].get<double>();
        if (j.contains("sigma2")) c.sigma2 = j["sigma2"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("nscore_range")) {
            auto r = j["nscore_range"].get<std::vector<double>>();
            if (r.size() != 2) throw LoadError("nscore_range must have two entries");
            c.nscore_min = r[0];
            c.nscore_max = r[1];
        }
        if (j.contains("age_range")) {
            auto r = j["age_range"].get<std::vector<double>>();
            if (r.size() != 2) throw LoadError("age_range must have two entries");
            c.age_min = r[0];
            c.age_max = r[1];
        }
    } catch (const json::exception& e) {
        throw LoadError(std::string("sim config: ") + e.what());
    }
    c.validate();
    return c;
}

SimConfig sim_config_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return sim_config_from_json(ss.str());
}

void write_truth_json(const std::string& path, const SimConfig& config) {
    json j;
    j["N"] = config.n_total;
    j["n"] = config.n_groups;
    j["beta1"] = vector_to_json(config.beta1);
    j["beta2"] = vector_to_json(config.beta2);
    j["gamma_bar"] = matrix_to_json(config.gamma_bar);
    j["sigma1"] = config.sigma1;
    j["sigma2"] = config.sigma2;
    j["seed"] = config.seed;
    std::ofstream out(path);
    if (!out) throw LoadError("cannot open output file: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace mvlme
