#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "pyramid/core.hpp"
#include "pyramid/gibbs.hpp"

namespace pyramid {

namespace fs = std::filesystem;
using Json = nlohmann::json;

/// Write to a sibling temp file, then rename over `path`.
void write_file_atomic(const fs::path& path, const std::string& contents);
std::string read_file(const fs::path& path);

/// Comma-separated integer table; a first line with non-numeric cells is
/// taken as a header. Errors name the offending row and column (1-based,
/// data rows only).
IntMatrix parse_int_table(const std::string& text, const std::string& what);
Matrix parse_real_table(const std::string& text, const std::string& what);

/// Category codes 1..d. With categories <= 0 the cardinalities are inferred.
Dataset read_dataset_csv(const fs::path& path, int categories = 0);
std::string dataset_to_csv(const Dataset& data);

std::string int_matrix_to_csv(const IntMatrix& m);
/// Round-trip exact (17 significant digits).
std::string matrix_to_csv(const Matrix& m);
GraphicalMatrix read_graph_csv(const fs::path& path);

Json to_json(const TwoLayerParams& t);
TwoLayerParams two_layer_from_json(const Json& j);

/// Per-block CSV files plus draws.json with the chain metadata.
void write_draws(const fs::path& dir, const PosteriorDraws& draws);
PosteriorDraws read_draws(const fs::path& dir);

}  // namespace pyramid
