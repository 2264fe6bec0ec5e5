#include "mse/attention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mse/image_io.hpp"

namespace mse {

std::vector<int> CoarseAttention::ranking() const {
    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return values[a] > values[b]; });
    return order;
}

std::vector<int> CoarseAttention::top(int n) const {
    auto order = ranking();
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(n, 0))));
    return order;
}

CoarseAttention pool_attention(const ScalarField& full_map, const PatchGrid& grid) {
    if (full_map.height != grid.image_height() || full_map.width != grid.image_width())
        throw std::invalid_argument("pool_attention: map dimensions do not match the grid");
    CoarseAttention out{grid.r(), std::vector<double>(grid.patch_count(), 0.0)};
    for (int p = 0; p < grid.patch_count(); ++p) {
        const auto rows = grid.patch_rows(p);
        const auto cols = grid.patch_cols(p);
        double sum = 0.0;
        for (int y = rows.begin; y < rows.end; ++y)
            for (int x = cols.begin; x < cols.end; ++x) sum += full_map.at(y, x);
        const double v = sum / (static_cast<double>(rows.size()) * cols.size());
        if (!std::isfinite(v)) throw std::invalid_argument("pool_attention: non-finite attention value");
        out.values[p] = v;
    }
    return out;
}

CoarseAttention occlusion_attention(EvalCache& cache, int class_index, PerturbationMode mode) {
    const int r = cache.r();
    std::vector<PatchSet> singletons;
    singletons.reserve(r * r);
    for (int p = 0; p < r * r; ++p) singletons.push_back(PatchSet(r).with(p));
    const auto scores = cache.scores_batch(singletons, mode);
    CoarseAttention out{r, std::vector<double>(scores.size())};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (class_index < 0 || class_index >= static_cast<int>(scores[i]->size()))
            throw std::invalid_argument("occlusion_attention: class index out of range");
        out.values[i] = (*scores[i])[static_cast<std::size_t>(class_index)];
    }
    return out;
}

namespace {

ScalarField load_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<float>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        std::vector<float> row;
        std::string tok;
        while (ls >> tok) {
            std::size_t used = 0;
            float v = 0.0f;
            try {
                v = std::stof(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size())
                throw std::invalid_argument("heatmap " + path.string() + ": bad number '" + tok + "'");
            row.push_back(v);
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument("heatmap " + path.string() + " is empty");
    ScalarField f(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int y = 0; y < f.height; ++y) {
        if (static_cast<int>(rows[y].size()) != f.width)
            throw std::invalid_argument("heatmap " + path.string() + ": ragged rows");
        for (int x = 0; x < f.width; ++x) f.at(y, x) = rows[y][x];
    }
    return f;
}

}  // namespace

ScalarField load_heatmap(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".csv" || ext == ".txt") return load_matrix(path);
    return read_grayscale(path);
}

}  // namespace mse
