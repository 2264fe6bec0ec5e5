#include "mse/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "mse/attention.hpp"
#include "mse/diversity.hpp"
#include "mse/export.hpp"
#include "mse/image_io.hpp"
#include "mse/sag.hpp"

namespace mse {

std::string MethodSpec::label() const {
    return kind == Kind::Comb ? "CombS" : "BeamS-" + std::to_string(width);
}

MethodSpec MethodSpec::parse(const std::string& text) {
    std::string t;
    for (char ch : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    if (t == "comb" || t == "combs") return {Kind::Comb, 0};
    for (const char* prefix : {"beam-", "beams-"}) {
        const std::string p(prefix);
        if (t.rfind(p, 0) == 0) {
            std::size_t used = 0;
            const int w = std::stoi(t.substr(p.size()), &used);
            if (used != t.size() - p.size() || w < 1) break;
            return {Kind::Beam, w};
        }
    }
    throw std::invalid_argument("unknown method '" + text + "' (expected comb or beam-<w>)");
}

std::size_t CorpusReport::image_count() const {
    std::set<std::string> ids;
    for (const auto& row : rows) ids.insert(row.id);
    return ids.size();
}

std::vector<int> CorpusReport::coverage(const std::string& method) const {
    std::vector<int> out(static_cast<std::size_t>(r * r), 0);
    for (const auto& row : rows) {
        if (row.method != method || !row.min_mse_size) continue;
        for (int k = *row.min_mse_size; k <= r * r; ++k) ++out[static_cast<std::size_t>(k - 1)];
    }
    return out;
}

DiversityStats diversity_stats(const CorpusReport& report, const std::string& method, int overlap,
                               bool include_zero) {
    std::vector<int> values;
    for (const auto& row : report.rows) {
        if (row.method != method) continue;
        auto it = row.diverse_counts.find(overlap);
        const int v = it == row.diverse_counts.end() ? 0 : it->second;
        if (v == 0 && !include_zero) continue;
        values.push_back(v);
    }
    DiversityStats s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (int v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (int v : values) sq += (v - s.mean) * (v - s.mean);
    s.variance = sq / static_cast<double>(values.size());
    std::map<int, int> freq;
    for (int v : values) ++freq[v];
    int best = -1;
    for (const auto& [v, f] : freq) {
        if (f > best) {
            best = f;
            s.mode = v;
        }
    }
    return s;
}

std::vector<CorpusItem> load_corpus(const std::filesystem::path& dir, const ClassifierFactory& factory,
                                    std::vector<CorpusError>& errors) {
    if (!std::filesystem::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        const auto stem = entry.path().stem().string();
        if (stem.size() > 10 && stem.ends_with(".attention")) continue;
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<CorpusItem> items;
    for (const auto& path : files) {
        const std::string id = path.stem().string();
        try {
            CorpusItem item;
            item.id = id;
            item.image = read_image(path);
            for (const char* ext : {".attention.csv", ".attention.png"}) {
                const auto side = path.parent_path() / (id + ext);
                if (std::filesystem::exists(side)) {
                    item.heatmap = load_heatmap(side);
                    break;
                }
            }
            item.classifier = factory(path, item.image);
            items.push_back(std::move(item));
        } catch (const std::exception& e) {
            errors.push_back({id, e.what()});
        }
    }
    return items;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& ch : out)
        if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    return out;
}

ImageResult run_one(const CorpusItem& item, const MethodSpec& method, const HarnessConfig& config,
                    const std::filesystem::path& graph_dir) {
    if (!item.classifier) throw std::invalid_argument("no classifier for item");
    const SearchConfig& base = config.search;
    Image image = item.image;
    if (auto size = item.classifier->input_size()) image = resize_bilinear(image, size->first, size->second);

    ImageResult row;
    row.id = item.id;
    row.method = method.label();

    EvalCache cache(*item.classifier, image, base.r);
    const auto t_find = Clock::now();
    const int cls = item.class_index ? *item.class_index : argmax(cache.scores(PatchSet::full(base.r), base.mode));
    const SearchContext ctx = make_context(cache, cls, base);

    CoarseAttention attention;
    if (item.heatmap) {
        const auto field = resize_bilinear(*item.heatmap, image.height, image.width);
        attention = pool_attention(field, cache.grid());
    } else {
        attention = occlusion_attention(cache, cls, base.mode);
    }

    if (method.kind == MethodSpec::Kind::Comb) {
        for (int k = 1; k < base.m; ++k) {
            SearchConfig cfg = base;
            cfg.k = k;
            auto found = combinatorial_search(attention, ctx, cfg);
            row.mses.insert(row.mses.end(), found.begin(), found.end());
        }
        std::sort(row.mses.begin(), row.mses.end(), ranks_before);
    } else {
        SearchConfig cfg = base;
        cfg.beam_width = method.width;
        row.mses = beam_search(attention, ctx, cfg);
    }
    row.find_seconds = seconds_since(t_find);

    for (const auto& rec : row.mses)
        if (!row.min_mse_size || rec.set.size() < *row.min_mse_size) row.min_mse_size = rec.set.size();
    for (int overlap : config.overlap_levels) row.diverse_counts[overlap] = count_diverse(row.mses, overlap);

    const auto t_build = Clock::now();
    if (!row.mses.empty()) {
        const auto roots = select_diverse(row.mses, base.diverse_count);
        const SagGraph graph = build_sag(roots, ctx, base.p_low);
        if (!graph_dir.empty()) export_json(graph, graph_dir / (item.id + "__" + row.method + ".json"));
    }
    row.build_seconds = seconds_since(t_build);
    row.classifier_calls = cache.classifier_calls();
    row.distinct_keys = cache.distinct_keys();
    return row;
}

void write_reports(const CorpusReport& report, const HarnessConfig& config, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto open = [&](const char* name) {
        std::ofstream f(out_dir / name);
        if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
        f << std::setprecision(6);
        return f;
    };

    {
        auto f = open("per_image.csv");
        f << "# mse-harness per-image v1\n";
        f << "image,method,min_mse_size,num_mses";
        for (int o : config.overlap_levels) f << ",diverse_overlap_" << o;
        f << ",find_seconds,build_seconds,classifier_calls\n";
        for (const auto& row : report.rows) {
            f << sanitize(row.id) << ',' << row.method << ',';
            if (row.min_mse_size) f << *row.min_mse_size; else f << "none";
            f << ',' << row.mses.size();
            for (int o : config.overlap_levels) f << ',' << row.diverse_counts.at(o);
            f << ',' << row.find_seconds << ',' << row.build_seconds << ',' << row.classifier_calls << '\n';
        }
    }
    {
        auto f = open("coverage.csv");
        f << "# mse-harness coverage v1\n";
        f << "method,size,images_covered,images_total,fraction\n";
        for (const auto& m : report.methods) {
            const auto cov = report.coverage(m);
            std::size_t total = 0;
            for (const auto& row : report.rows) total += row.method == m;
            for (std::size_t k = 0; k < cov.size(); ++k) {
                const double frac = total ? static_cast<double>(cov[k]) / static_cast<double>(total) : 0.0;
                f << m << ',' << k + 1 << ',' << cov[k] << ',' << total << ',' << frac << '\n';
            }
        }
    }
    {
        auto f = open("diversity.csv");
        f << "# mse-harness diversity v1\n";
        f << "method,overlap,zero_mse_images,n,mean,variance,mode\n";
        for (const auto& m : report.methods)
            for (int o : config.overlap_levels)
                for (bool include_zero : {true, false}) {
                    const auto s = diversity_stats(report, m, o, include_zero);
                    f << m << ',' << o << ',' << (include_zero ? "included" : "excluded") << ',' << s.n << ','
                      << s.mean << ',' << s.variance << ',' << s.mode << '\n';
                }
    }
    {
        auto f = open("errors.csv");
        f << "# mse-harness errors v1\n";
        f << "image,message\n";
        for (const auto& e : report.errors) f << sanitize(e.id) << ',' << sanitize(e.message) << '\n';
    }
}

}  // namespace

CorpusReport run_corpus(const std::vector<CorpusItem>& items, const HarnessConfig& config,
                        const std::filesystem::path& out_dir, std::vector<CorpusError> load_errors) {
    config.search.validate();
    if (config.methods.empty()) throw std::invalid_argument("harness: no methods");
    for (int o : config.overlap_levels)
        if (o < 0) throw std::invalid_argument("harness: overlap levels must be >= 0");

    CorpusReport report;
    report.r = config.search.r;
    for (const auto& m : config.methods) report.methods.push_back(m.label());
    report.errors = std::move(load_errors);

    std::filesystem::path graph_dir;
    if (!out_dir.empty() && config.write_graphs) {
        graph_dir = out_dir / "graphs";
        std::filesystem::create_directories(graph_dir);
    }

    const std::size_t tasks = items.size() * config.methods.size();
    std::vector<std::optional<ImageResult>> results(tasks);
    std::vector<std::optional<std::string>> failures(tasks);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t t = next++; t < tasks; t = next++) {
            const auto& item = items[t / config.methods.size()];
            const auto& method = config.methods[t % config.methods.size()];
            try {
                results[t] = run_one(item, method, config, graph_dir);
            } catch (const std::exception& e) {
                failures[t] = method.label() + ": " + e.what();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers =
        std::min<std::size_t>(tasks, config.workers > 0 ? static_cast<std::size_t>(config.workers) : hw);
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    }

    for (std::size_t t = 0; t < tasks; ++t) {
        if (results[t]) report.rows.push_back(std::move(*results[t]));
        if (failures[t]) report.errors.push_back({items[t / config.methods.size()].id, *failures[t]});
    }
    if (!out_dir.empty()) write_reports(report, config, out_dir);
    return report;
}

PerturbationComparison compare_perturbation(const std::vector<CorpusItem>& items, const HarnessConfig& config,
                                            double blur_sigma, const std::filesystem::path& out_csv) {
    HarnessConfig cfg = config;
    cfg.write_graphs = false;
    cfg.search.mode = PerturbationMode::black();
    const CorpusReport black = run_corpus(items, cfg, {});
    cfg.search.mode = PerturbationMode::blur(blur_sigma);
    const CorpusReport blur = run_corpus(items, cfg, {});

    PerturbationComparison out;
    out.images = items.size();
    for (const auto& m : black.methods) {
        out.black[m] = black.coverage(m);
        out.blur[m] = blur.coverage(m);
    }
    if (!out_csv.empty()) {
        if (out_csv.has_parent_path()) std::filesystem::create_directories(out_csv.parent_path());
        std::ofstream f(out_csv);
        if (!f) throw std::runtime_error("cannot write " + out_csv.string());
        f << std::setprecision(6);
        f << "# mse-harness perturbation-comparison v1\n";
        f << "method,size,black_images,blur_images,images_total,black_fraction,blur_fraction\n";
        const double total = static_cast<double>(items.size());
        for (const auto& m : black.methods) {
            const auto& b = out.black[m];
            const auto& u = out.blur[m];
            for (std::size_t k = 0; k < b.size(); ++k) {
                f << m << ',' << k + 1 << ',' << b[k] << ',' << u[k] << ',' << items.size() << ','
                  << (total > 0 ? b[k] / total : 0.0) << ',' << (total > 0 ? u[k] / total : 0.0) << '\n';
            }
        }
    }
    return out;
}

}  // namespace mse
