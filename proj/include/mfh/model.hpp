#pragma once

#include "mfh/numkernel.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace mfh {

/// One small area: direct estimate y (k), covariates X (k x s) and the known
/// sampling covariance D (k x k, positive definite).
struct AreaData {
    Vector y;
    Matrix X;
    SymMatrix D;
};

/// A validated collection of m >= 2 areas sharing k and s, whose stacked
/// design matrix (km x s) has full column rank. Immutable once constructed.
class Dataset {
public:
    /// Validates and takes ownership of the areas. Throws DimensionMismatch,
    /// RankDeficientDesign or NonPDSamplingCovariance.
    explicit Dataset(std::vector<AreaData> areas);

    std::size_t m() const noexcept { return areas_.size(); }
    Eigen::Index k() const noexcept { return k_; }
    Eigen::Index s() const noexcept { return s_; }

    const AreaData& area(std::size_t i) const;
    const std::vector<AreaData>& areas() const noexcept { return areas_; }

    /// Stacked (km x s) design and (km) response.
    Matrix stacked_X() const;
    Vector stacked_y() const;

    /// Copy of this dataset with y replaced area by area (same X and D).
    Dataset with_y(const std::vector<Vector>& ys) const;

private:
    std::vector<AreaData> areas_;
    Eigen::Index k_ = 0;
    Eigen::Index s_ = 0;
};

/// Free-function form of the Dataset constructor.
Dataset validate(std::vector<AreaData> areas);

struct ModelParams {
    Vector beta;
    SymMatrix psi;  // positive semi-definite
};

enum class DataFormat { Json, Csv };

DataFormat parse_format(const std::string& name);

/// Loads a dataset. Json: a single document {k, s, areas:[{y, X, D}]}.
/// Csv: a directory holding y.csv, X.csv and D.csv in long format.
Dataset load_dataset(const std::filesystem::path& path, DataFormat format);
void save_dataset(const Dataset& data, const std::filesystem::path& path, DataFormat format);

Dataset dataset_from_json_text(const std::string& text);
std::string dataset_to_json_text(const Dataset& data);

}  // namespace mfh
