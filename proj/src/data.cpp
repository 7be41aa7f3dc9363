#include "wonder/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wonder/rng.hpp"

namespace wonder::data {

void SynthSpec::validate() const {
    if (n < 1 || p < 1) throw std::invalid_argument("SynthSpec: need n, p >= 1");
    if (design == DesignKind::ar1 && !(rho > -1.0 && rho < 1.0))
        throw std::invalid_argument("SynthSpec: rho must be in (-1, 1)");
    if (!(alpha2 >= 0.0) || !(sigma2 >= 0.0))
        throw std::invalid_argument("SynthSpec: alpha2 and sigma2 must be >= 0");
}

Dataset generate(const SynthSpec& spec, par::Mode mode) {
    spec.validate();

    Dataset ds;
    ds.X.resize(spec.n, spec.p);
    ds.Y.resize(spec.n);

    Eigen::VectorXd beta(spec.p);
    {
        rng::Stream bs(rng::derive(spec.seed, rng::kTagBeta));
        const double sd = std::sqrt(spec.sigma2 * spec.alpha2 /
                                    static_cast<double>(spec.p));
        for (Eigen::Index j = 0; j < spec.p; ++j) beta(j) = sd * bs.gaussian();
    }

    const double rho = spec.design == DesignKind::ar1 ? spec.rho : 0.0;
    const double innov = std::sqrt(1.0 - rho * rho);
    const double noise_sd = std::sqrt(spec.sigma2);

    // One stream per row: parallel and serial fills are bitwise identical.
    par::for_index(spec.n, mode, [&](std::ptrdiff_t i) {
        rng::Stream rs(rng::derive(spec.seed, rng::kTagRow, static_cast<std::uint64_t>(i)));
        double prev = 0.0;
        for (Eigen::Index j = 0; j < spec.p; ++j) {
            const double z = rs.gaussian();
            const double x = (j == 0) ? z : rho * prev + innov * z;
            ds.X(i, j) = x;
            prev = x;
        }
        rng::Stream es(rng::derive(spec.seed, rng::kTagNoise, static_cast<std::uint64_t>(i)));
        ds.Y(i) = ds.X.row(i).dot(beta) + noise_sd * es.gaussian();
    });

    ds.beta = std::move(beta);
    ds.theta = spectral::SignalNoise{spec.sigma2, spec.alpha2};
    return ds;
}

namespace {

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(end[-1]))) --end;
    double value = 0.0;
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end) {
        std::ostringstream os;
        os << "load_csv: non-numeric cell at row " << row << ", column " << col
           << ": '" << cell << "'";
        throw std::runtime_error(os.str());
    }
    return value;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

} // namespace

Dataset load_csv(const std::string& path, int outcome_column, bool has_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first && has_header) {
            first = false;
            continue;
        }
        first = false;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (width == 0) {
            width = cells.size();
            if (width < 2)
                throw std::runtime_error("load_csv: need at least two columns");
        } else if (cells.size() != width) {
            std::ostringstream os;
            os << "load_csv: ragged row " << line_no << " has " << cells.size()
               << " cells, expected " << width;
            throw std::runtime_error(os.str());
        }
        std::vector<double> row(width);
        for (std::size_t c = 0; c < width; ++c)
            row[c] = parse_cell(cells[c], line_no, c + 1);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("load_csv: no data rows in '" + path + "'");

    std::size_t outcome = outcome_column < 0
                              ? width - 1
                              : static_cast<std::size_t>(outcome_column);
    if (outcome >= width) {
        std::ostringstream os;
        os << "load_csv: outcome column " << outcome_column << " out of range (file has "
           << width << " columns)";
        throw std::runtime_error(os.str());
    }

    Dataset ds;
    ds.X.resize(static_cast<Eigen::Index>(rows.size()),
                static_cast<Eigen::Index>(width - 1));
    ds.Y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Eigen::Index jx = 0;
        for (std::size_t c = 0; c < width; ++c) {
            if (c == outcome)
                ds.Y(static_cast<Eigen::Index>(i)) = rows[i][c];
            else
                ds.X(static_cast<Eigen::Index>(i), jx++) = rows[i][c];
        }
    }
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path, bool with_header) {
    std::FILE* out = std::fopen(path.c_str(), "w");
    if (out == nullptr)
        throw std::runtime_error("write_csv: cannot open '" + path + "'");
    if (with_header) {
        for (Eigen::Index j = 0; j < ds.p(); ++j) std::fprintf(out, "x%ld,", static_cast<long>(j));
        std::fprintf(out, "y\n");
    }
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        for (Eigen::Index j = 0; j < ds.p(); ++j)
            std::fprintf(out, "%.17g,", ds.X(i, j));
        std::fprintf(out, "%.17g\n", ds.Y(i));
    }
    std::fclose(out);
}

NormalizeStats center_normalize(Dataset& train, Dataset* test) {
    const Eigen::Index n = train.n();
    if (n < 1) throw std::invalid_argument("center_normalize: empty training set");

    NormalizeStats stats;
    stats.x_mean = train.X.colwise().mean();
    stats.x_scale.resize(train.p());
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    for (Eigen::Index j = 0; j < train.p(); ++j) {
        const double var =
            (train.X.col(j).array() - stats.x_mean(j)).square().sum() / denom;
        const double sd = std::sqrt(var);
        if (sd > 0.0) {
            stats.x_scale(j) = sd;
        } else {
            stats.x_scale(j) = 1.0;
            stats.constant_columns.push_back(j);
        }
    }
    stats.y_mean = train.Y.mean();
    {
        const double var = (train.Y.array() - stats.y_mean).square().sum() / denom;
        stats.y_scale = var > 0.0 ? std::sqrt(var) : 1.0;
    }

    const auto apply = [&](Dataset& ds) {
        for (Eigen::Index j = 0; j < ds.p(); ++j)
            ds.X.col(j) = (ds.X.col(j).array() - stats.x_mean(j)) / stats.x_scale(j);
        ds.Y = (ds.Y.array() - stats.y_mean) / stats.y_scale;
    };
    apply(train);
    if (test != nullptr) {
        if (test->p() != train.p())
            throw std::invalid_argument("center_normalize: test width mismatch");
        apply(*test);
    }
    return stats;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds,
                                             Eigen::Index n_train,
                                             Eigen::Index n_test,
                                             std::uint64_t seed) {
    if (n_train < 0 || n_test < 0 || n_train + n_test > ds.n())
        throw std::invalid_argument("train_test_split: insufficient rows");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(ds.n()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng::Stream st(rng::derive(seed, rng::kTagPermute));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[st.uniform_below(i)]);

    const auto take = [&](Eigen::Index offset, Eigen::Index count) {
        Dataset out;
        out.X.resize(count, ds.p());
        out.Y.resize(count);
        for (Eigen::Index i = 0; i < count; ++i) {
            out.X.row(i) = ds.X.row(order[static_cast<std::size_t>(offset + i)]);
            out.Y(i) = ds.Y(order[static_cast<std::size_t>(offset + i)]);
        }
        out.beta = ds.beta;
        out.theta = ds.theta;
        return out;
    };
    return {take(0, n_train), take(n_train, n_test)};
}

} // namespace wonder::data
