#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvlme/fit.hpp"
#include "mvlme/simulate.hpp"
#include "mvlme/types.hpp"

namespace mvlme {

// ----- model specification ----------------------------------------------------

/// Keyword accepted in fixed/random column lists for the intercept column.
bool is_intercept_keyword(const std::string& name);

struct DimensionSpec {
    std::string response;
    std::vector<std::string> fixed;   ///< ordered; "1" or "intercept" allowed
    std::vector<std::string> random;  ///< ordered; "1" or "intercept" allowed
};

enum class InitMode { naive, advised, explicit_values };

/// Column roles and fit options for one bivariate model. Parsed from a JSON
/// file; see README for the schema.
struct ModelSpec {
    std::string group_column;
    DimensionSpec dim1, dim2;
    FitCriterion criterion = FitCriterion::ml;
    InitMode init = InitMode::advised;
    std::optional<VarianceParams> init_values;  ///< required when init == explicit_values

    void validate() const;  ///< no duplicate columns within a role, shapes of explicit init
};

ModelSpec model_spec_from_json(const std::string& json_text);
ModelSpec model_spec_from_file(const std::string& path);

/// The working-design spec matching simulated datasets
/// (group "id", responses weight/height, fixed 1,sex,Nscore,age, random 1,Nscore).
ModelSpec default_model_spec();

// ----- dataset ingestion --------------------------------------------------------

/// Loads a long-format CSV (header row, one observation per row, both
/// responses present on each row). Rows are grouped by the group column in
/// order of first appearance, input order preserved within groups. Missing
/// values are rejected; errors carry 1-based data-row and column coordinates.
GroupedBivariateData load_csv(const std::string& path, const ModelSpec& spec);

/// Writes a simulated dataset in the working-design schema
/// (id,weight,height,sex,Nscore,age) with round-trip-exact number formatting.
void write_dataset_csv(const std::string& path, const GroupedBivariateData& data);

// ----- simulation config and truth sidecar ---------------------------------------

/// Reads a SimConfig from JSON; absent fields keep their default_config()
/// values.
SimConfig sim_config_from_json(const std::string& json_text);
SimConfig sim_config_from_file(const std::string& path);

/// Writes the sidecar truth file (true parameters and seed) used to score
/// fits against a simulated dataset.
void write_truth_json(const std::string& path, const SimConfig& config);

}  // namespace mvlme
