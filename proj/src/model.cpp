#include "mfh/model.hpp"

#include "mfh/error.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace mfh {

using nlohmann::json;

namespace {

std::string area_label(std::size_t i)
{
    return "area " + std::to_string(i);
}

}  // namespace

Dataset::Dataset(std::vector<AreaData> areas) : areas_(std::move(areas))
{
    if (areas_.size() < 2) {
        throw Error(ErrorCode::DimensionMismatch, "dataset needs at least 2 areas, got " +
                                                      std::to_string(areas_.size()));
    }
    k_ = areas_.front().y.size();
    s_ = areas_.front().X.cols();
    if (k_ < 1 || s_ < 1) {
        throw Error(ErrorCode::DimensionMismatch, "k and s must be positive");
    }
    for (std::size_t i = 0; i < areas_.size(); ++i) {
        const AreaData& a = areas_[i];
        if (a.y.size() != k_ || a.X.rows() != k_ || a.X.cols() != s_ || a.D.dim() != k_) {
            throw Error(ErrorCode::DimensionMismatch,
                        area_label(i) + ": expected y(" + std::to_string(k_) + "), X(" +
                            std::to_string(k_) + "x" + std::to_string(s_) + "), D(" +
                            std::to_string(k_) + "x" + std::to_string(k_) + ")");
        }
        if (!a.y.allFinite() || !a.X.allFinite() || !a.D.matrix().allFinite()) {
            throw Error(ErrorCode::InvalidInput, area_label(i) + ": non-finite entries");
        }
        if (!is_positive_definite(a.D)) {
            throw Error(ErrorCode::NonPDSamplingCovariance,
                        area_label(i) + ": sampling covariance D is not positive definite");
        }
    }
    const Eigen::Index rows = k_ * static_cast<Eigen::Index>(areas_.size());
    if (s_ >= rows) {
        throw Error(ErrorCode::RankDeficientDesign, "need s < k*m (s=" + std::to_string(s_) +
                                                        ", k*m=" + std::to_string(rows) + ")");
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(stacked_X());
    qr.setThreshold(1e-10);
    if (qr.rank() < s_) {
        throw Error(ErrorCode::RankDeficientDesign,
                    "stacked design has rank " + std::to_string(qr.rank()) + " < s=" +
                        std::to_string(s_));
    }
}

const AreaData& Dataset::area(std::size_t i) const
{
    if (i >= areas_.size()) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "area index " + std::to_string(i) + " out of range [0, " +
                        std::to_string(areas_.size()) + ")");
    }
    return areas_[i];
}

Matrix Dataset::stacked_X() const
{
    Matrix X(k_ * static_cast<Eigen::Index>(m()), s_);
    for (std::size_t i = 0; i < m(); ++i) {
        X.middleRows(static_cast<Eigen::Index>(i) * k_, k_) = areas_[i].X;
    }
    return X;
}

Vector Dataset::stacked_y() const
{
    Vector y(k_ * static_cast<Eigen::Index>(m()));
    for (std::size_t i = 0; i < m(); ++i) {
        y.segment(static_cast<Eigen::Index>(i) * k_, k_) = areas_[i].y;
    }
    return y;
}

Dataset Dataset::with_y(const std::vector<Vector>& ys) const
{
    if (ys.size() != m()) {
        throw Error(ErrorCode::DimensionMismatch, "with_y: wrong number of areas");
    }
    std::vector<AreaData> copy = areas_;
    for (std::size_t i = 0; i < m(); ++i) {
        copy[i].y = ys[i];
    }
    return Dataset(std::move(copy));
}

Dataset validate(std::vector<AreaData> areas)
{
    return Dataset(std::move(areas));
}

DataFormat parse_format(const std::string& name)
{
    if (name == "json") return DataFormat::Json;
    if (name == "csv") return DataFormat::Csv;
    throw Error(ErrorCode::InvalidInput, "unknown data format '" + name + "' (json|csv)");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Vector vector_from_json(const json& j, const std::string& ctx)
{
    if (!j.is_array()) {
        throw Error(ErrorCode::ParseError, ctx + ": expected an array of numbers");
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw Error(ErrorCode::ParseError, ctx + "[" + std::to_string(i) + "]: not a number");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Matrix matrix_from_json(const json& j, const std::string& ctx)
{
    if (!j.is_array() || j.empty()) {
        throw Error(ErrorCode::ParseError, ctx + ": expected a non-empty array of rows");
    }
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Vector row = vector_from_json(j[r], ctx + "[" + std::to_string(r) + "]");
        if (static_cast<std::size_t>(row.size()) != cols) {
            throw Error(ErrorCode::ParseError, ctx + ": ragged rows");
        }
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

json vector_to_json(const Vector& v)
{
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

json matrix_to_json(const Matrix& m)
{
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out.push_back(vector_to_json(m.row(r).transpose()));
    }
    return out;
}

const json& require_field(const json& obj, const char* key, const std::string& ctx)
{
    if (!obj.is_object() || !obj.contains(key)) {
        throw Error(ErrorCode::ParseError, ctx + ": missing field '" + key + "'");
    }
    return obj.at(key);
}

}  // namespace

Dataset dataset_from_json_text(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    const json& areas_json = require_field(doc, "areas", "document");
    if (!areas_json.is_array()) {
        throw Error(ErrorCode::ParseError, "document: 'areas' must be an array");
    }
    std::vector<AreaData> areas;
    areas.reserve(areas_json.size());
    for (std::size_t i = 0; i < areas_json.size(); ++i) {
        const std::string ctx = "areas[" + std::to_string(i) + "]";
        const json& a = areas_json[i];
        Vector y = vector_from_json(require_field(a, "y", ctx), ctx + ".y");
        Matrix X = matrix_from_json(require_field(a, "X", ctx), ctx + ".X");
        Matrix D = matrix_from_json(require_field(a, "D", ctx), ctx + ".D");
        if (D.rows() != D.cols()) {
            throw Error(ErrorCode::DimensionMismatch, ctx + ".D: not square");
        }
        areas.push_back({std::move(y), std::move(X), SymMatrix(D)});
    }
    Dataset data(std::move(areas));
    for (const char* key : {"k", "s"}) {
        if (doc.contains(key)) {
            const auto declared = doc.at(key).get<long long>();
            const auto actual = std::string(key) == "k" ? data.k() : data.s();
            if (declared != actual) {
                throw Error(ErrorCode::DimensionMismatch,
                            std::string("declared ") + key + "=" + std::to_string(declared) +
                                " but areas have " + std::to_string(actual));
            }
        }
    }
    return data;
}

std::string dataset_to_json_text(const Dataset& data)
{
    json doc;
    doc["k"] = data.k();
    doc["s"] = data.s();
    doc["areas"] = json::array();
    for (const AreaData& a : data.areas()) {
        doc["areas"].push_back(
            {{"y", vector_to_json(a.y)}, {"X", matrix_to_json(a.X)}, {"D", matrix_to_json(a.D.matrix())}});
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// CSV (long format, three files)

namespace {

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

using Cells = std::map<std::tuple<long, long, long>, double>;

// Reads a CSV with `ncols` columns: (ncols - 1) non-negative integer keys
// followed by a value. '#' lines are comments; the first other line is a header.
Cells read_long_csv(const std::filesystem::path& path, int ncols)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    Cells cells;
    std::string line;
    long lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) {
            fields.push_back(f);
        }
        const std::string ctx = path.filename().string() + ":" + std::to_string(lineno);
        if (static_cast<int>(fields.size()) != ncols) {
            throw Error(ErrorCode::ParseError, ctx + ": expected " + std::to_string(ncols) +
                                                   " fields, got " + std::to_string(fields.size()));
        }
        long key[3] = {0, 0, 0};
        for (int c = 0; c < ncols - 1; ++c) {
            const std::string& s = fields[static_cast<std::size_t>(c)];
            const auto r = std::from_chars(s.data(), s.data() + s.size(), key[c]);
            if (r.ec != std::errc() || r.ptr != s.data() + s.size() || key[c] < 0) {
                throw Error(ErrorCode::ParseError, ctx + ": bad index '" + s + "'");
            }
        }
        const std::string& vs = fields.back();
        double value = 0.0;
        const auto r = std::from_chars(vs.data(), vs.data() + vs.size(), value);
        if (r.ec != std::errc() || r.ptr != vs.data() + vs.size()) {
            throw Error(ErrorCode::ParseError, ctx + ": bad value '" + vs + "'");
        }
        if (!cells.emplace(std::make_tuple(key[0], key[1], key[2]), value).second) {
            throw Error(ErrorCode::ParseError, ctx + ": duplicate entry");
        }
    }
    return cells;
}

double take_cell(const Cells& cells, long a, long r, long c, const std::string& file)
{
    const auto it = cells.find({a, r, c});
    if (it == cells.end()) {
        throw Error(ErrorCode::ParseError,
                    file + ": missing entry for area " + std::to_string(a) + ", row " +
                        std::to_string(r) + (file == "y.csv" ? "" : ", col " + std::to_string(c)));
    }
    return it->second;
}

Dataset load_csv(const std::filesystem::path& dir)
{
    const Cells ys = read_long_csv(dir / "y.csv", 3);
    const Cells xs = read_long_csv(dir / "X.csv", 4);
    const Cells ds = read_long_csv(dir / "D.csv", 4);
    if (ys.empty()) {
        throw Error(ErrorCode::ParseError, "y.csv: no data rows");
    }
    long m = 0, k = 0, s = 0;
    for (const auto& [key, v] : ys) {
        m = std::max(m, std::get<0>(key) + 1);
        k = std::max(k, std::get<1>(key) + 1);
    }
    for (const auto& [key, v] : xs) {
        s = std::max(s, std::get<2>(key) + 1);
    }
    std::vector<AreaData> areas;
    for (long a = 0; a < m; ++a) {
        AreaData area{Vector(k), Matrix(k, s), SymMatrix()};
        Matrix D(k, k);
        for (long r = 0; r < k; ++r) {
            area.y(r) = take_cell(ys, a, r, 0, "y.csv");
            for (long c = 0; c < s; ++c) {
                area.X(r, c) = take_cell(xs, a, r, c, "X.csv");
            }
            for (long c = 0; c < k; ++c) {
                D(r, c) = take_cell(ds, a, r, c, "D.csv");
            }
        }
        area.D = SymMatrix(D);
        areas.push_back(std::move(area));
    }
    // take_cell caught every gap; leftovers mean indices beyond y.csv's range.
    if (static_cast<long>(ys.size()) != m * k || static_cast<long>(xs.size()) != m * k * s ||
        static_cast<long>(ds.size()) != m * k * k) {
        throw Error(ErrorCode::ParseError, "X.csv/D.csv: entries outside the area/row range of y.csv");
    }
    return Dataset(std::move(areas));
}

void save_csv(const Dataset& data, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    std::ofstream y(dir / "y.csv"), x(dir / "X.csv"), d(dir / "D.csv");
    if (!y || !x || !d) {
        throw Error(ErrorCode::IoError, "cannot write CSV files into " + dir.string());
    }
    y << "area,row,value\n";
    x << "area,row,col,value\n";
    d << "area,row,col,value\n";
    for (std::size_t a = 0; a < data.m(); ++a) {
        const AreaData& area = data.area(a);
        for (Eigen::Index r = 0; r < data.k(); ++r) {
            y << a << ',' << r << ',' << format_double(area.y(r)) << '\n';
            for (Eigen::Index c = 0; c < data.s(); ++c) {
                x << a << ',' << r << ',' << c << ',' << format_double(area.X(r, c)) << '\n';
            }
            for (Eigen::Index c = 0; c < data.k(); ++c) {
                d << a << ',' << r << ',' << c << ',' << format_double(area.D(r, c)) << '\n';
            }
        }
    }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, DataFormat format)
{
    if (format == DataFormat::Csv) {
        return load_csv(path);
    }
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return dataset_from_json_text(buf.str());
}

void save_dataset(const Dataset& data, const std::filesystem::path& path, DataFormat format)
{
    if (format == DataFormat::Csv) {
        save_csv(data, path);
        return;
    }
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out << dataset_to_json_text(data);
}

}  // namespace mfh
