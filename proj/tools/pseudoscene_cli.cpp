// Command-line front end for the dataset-synthesis pipeline:
//   analyze -> pseudolabel -> mosaic -> manifest, plus preview and validate.
//
// Exit codes: 0 success, 1 data or validation failure, 2 usage or
// configuration error. Options resolve as flag > environment (oracle URL and
// token only) > JSON config file > built-in default; every file-writing run
// drops an effective_config.json snapshot beside its outputs. Logs go to
// standard error as key=value lines, data only to files or standard output.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pseudoscene/catalog.hpp"
#include "pseudoscene/common.hpp"
#include "pseudoscene/dataset_io.hpp"
#include "pseudoscene/geometry.hpp"
#include "pseudoscene/http_oracle.hpp"
#include "pseudoscene/image.hpp"
#include "pseudoscene/manifest.hpp"
#include "pseudoscene/mosaic.hpp"
#include "pseudoscene/oracle.hpp"
#include "pseudoscene/pseudolabel.hpp"

namespace cat = pseudoscene::catalog;
namespace dio = pseudoscene::dataset_io;
namespace geo = pseudoscene::geometry;
namespace img = pseudoscene::image;
namespace mos = pseudoscene::mosaic;
namespace orc = pseudoscene::oracle;
namespace psl = pseudoscene::pseudolabel;
namespace fs = std::filesystem;
using nlohmann::json;
using pseudoscene::ConfigError;
using pseudoscene::IoError;

namespace {

constexpr const char* kEnvOracleUrl = "PSEUDOSCENE_ORACLE_URL";
constexpr const char* kEnvOracleToken = "PSEUDOSCENE_ORACLE_TOKEN";

// ---------------------------------------------------------------------------
// logging

std::string log_quote(const std::string& value) {
    if (!value.empty() &&
        value.find_first_of(" =\"\n\t") == std::string::npos) {
        return value;
    }
    std::string quoted = "\"";
    for (char c : value) {
        if (c == '"' || c == '\\') {
            quoted += '\\';
        }
        quoted += c == '\n' ? ' ' : c;
    }
    quoted += '"';
    return quoted;
}

void log_kv(const std::string& event,
            std::initializer_list<std::pair<const char*, std::string>> fields) {
    std::ostringstream os;
    os << "event=" << event;
    for (const auto& [key, value] : fields) {
        os << ' ' << key << '=' << log_quote(value);
    }
    std::cerr << os.str() << '\n';
}

// ---------------------------------------------------------------------------
// option resolution

json load_config_file(const std::string& path) {
    if (path.empty()) {
        return json::object();
    }
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    json config;
    try {
        in >> config;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!config.is_object()) {
        throw ConfigError(path + ": config must be a JSON object");
    }
    return config;
}

// Fills `value` from the config file when the flag was not given on the
// command line. Flags always win.
template <typename T>
void apply_config(const CLI::App& cmd, const json& config, const char* flag, const char* key,
                  T& value) {
    if (cmd.count(flag) > 0 || !config.contains(key)) {
        return;
    }
    try {
        value = config.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
    }
}

// Oracle endpoint settings additionally honor environment variables, sitting
// between flags and the config file.
void apply_env(const CLI::App& cmd, const char* flag, const char* env_name, std::string& value) {
    if (cmd.count(flag) > 0) {
        return;
    }
    if (const char* env = std::getenv(env_name); env != nullptr && *env != '\0') {
        value = env;
    }
}

void require_given(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw ConfigError(std::string(flag) + " is required");
    }
}

void require_input(const std::string& path, const char* what) {
    if (!fs::exists(path)) {
        throw ConfigError(std::string(what) + " not found: " + path);
    }
}

void require_jobs(int jobs) {
    if (jobs < 1) {
        throw ConfigError("--jobs must be at least 1");
    }
}

std::string joined_path(const std::string& root, const std::string& name) {
    if (root.empty()) {
        return name;
    }
    return (fs::path(root) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + dir + ": " + ec.message());
    }
}

void write_effective_config(const std::string& out_dir, json snapshot) {
    snapshot["tool"] = std::string(pseudoscene::kToolName);
    snapshot["version"] = std::string(pseudoscene::kToolVersion);
    dio::write_json_file(snapshot, (fs::path(out_dir) / "effective_config.json").string());
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << content;
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

// ---------------------------------------------------------------------------
// worker pool: index-ordered results, so output never depends on scheduling

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                    return;
                }
            }
        });
    }
    for (auto& thread : threads) {
        thread.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

// ---------------------------------------------------------------------------
// OpenCV-backed image I/O (decoded as BGR, stored as RGB)

img::Image read_image_rgb(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw IoError("cannot decode image: " + path);
    }
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    img::Image out;
    out.width = rgb.cols;
    out.height = rgb.rows;
    out.rgb.assign(rgb.data, rgb.data + static_cast<std::size_t>(3) * rgb.cols * rgb.rows);
    return out;
}

void write_image_rgb(const img::Image& image, const std::string& path) {
    const cv::Mat rgb(image.height, image.width, CV_8UC3,
                      const_cast<std::uint8_t*>(image.rgb.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path, bgr)) {
        throw IoError("cannot write image: " + path);
    }
}

class FileImageLoader final : public img::ImageLoader {
public:
    explicit FileImageLoader(std::map<std::int64_t, std::string> paths)
        : paths_(std::move(paths)) {}

    img::Image load(std::int64_t image_id) const override {
        auto it = paths_.find(image_id);
        if (it == paths_.end()) {
            throw IoError("no file known for image id " + std::to_string(image_id));
        }
        return read_image_rgb(it->second);
    }

private:
    std::map<std::int64_t, std::string> paths_;
};

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    std::string config;
    std::string gold;
    std::string oci;
    std::string out;
};

int run_analyze(const CLI::App& cmd, AnalyzeArgs args) {
    const json config = load_config_file(args.config);
    apply_config(cmd, config, "--gold", "gold", args.gold);
    apply_config(cmd, config, "--oci", "oci", args.oci);
    apply_config(cmd, config, "--out", "out", args.out);
    require_given(args.gold, "--gold");
    require_given(args.oci, "--oci");
    require_given(args.out, "--out");
    require_input(args.gold, "gold dataset");
    require_input(args.oci, "object-centric catalog");

    const auto gold = dio::parse_coco(args.gold);
    std::vector<cat::ClassRecord> oci_records;
    for (const auto& oci_class : cat::parse_oci_catalog(args.oci)) {
        oci_records.push_back(cat::to_class_record(oci_class));
    }
    const auto report = cat::frequency_report(gold, oci_records);

    ensure_dir(args.out);
    dio::write_json_file(cat::report_to_json(report),
                         (fs::path(args.out) / "frequency_report.json").string());
    write_text_file((fs::path(args.out) / "frequency_report.csv").string(),
                    cat::report_to_csv(report));
    write_effective_config(args.out, json{{"command", "analyze"},
                                          {"gold", args.gold},
                                          {"oci", args.oci},
                                          {"out", args.out}});
    log_kv("analyze", {{"images", std::to_string(gold.images.size())},
                       {"classes", std::to_string(report.classes.size())},
                       {"matched", std::to_string(report.matched_class_count)},
                       {"rare", std::to_string(report.rare)},
                       {"common", std::to_string(report.common)},
                       {"frequent", std::to_string(report.frequent)}});
    return 0;
}

// ---------------------------------------------------------------------------
// pseudolabel

struct PseudolabelArgs {
    std::string config;
    std::string catalog;
    std::string strategy = "f";
    std::string out;
    std::string detections;
    std::string gold;
    std::string images_root;
    double conf_threshold = 0.5;
    double nms_iou = 0.5;
    double gamma = 0.5;
    double base = 0.5;
    bool no_dedup = false;
    bool fallback_fixed = false;
    std::string oracle_table;
    std::string oracle_url;
    std::string oracle_token;
    std::vector<int> patch_color = {128, 128, 128};
    int timeout_seconds = 30;
    int retries = 0;
    int lore_top_k = 300;
    double lore_nms_iou = 0.5;
    double lore_stop_confidence = 0.1;
    double lore_ratio = 0.9;
    int jobs = 1;
};

struct CatalogEntry {
    std::int64_t image_id = 0;
    int class_id = 0;
    std::string file_name;
};

// Flag values are lowercase; annotation files carry the library's canonical
// spellings (F, S, D, Dt, Dc, LORE).
psl::Strategy strategy_from_flag(const std::string& token) {
    if (token == "f") return psl::Strategy::F;
    if (token == "s") return psl::Strategy::S;
    if (token == "d") return psl::Strategy::D;
    if (token == "dt") return psl::Strategy::Dt;
    if (token == "dc") return psl::Strategy::Dc;
    if (token == "lore") return psl::Strategy::LORE;
    throw ConfigError("--strategy must be one of f, s, d, dt, dc, lore");
}

std::map<int, std::int64_t> gold_image_counts(const dio::CocoDataset& gold) {
    std::map<int, std::set<std::int64_t>> images_per_class;
    for (const auto& annotation : gold.annotations) {
        images_per_class[annotation.category_id].insert(annotation.image_id);
    }
    std::map<int, std::int64_t> counts;
    for (const auto& [cls, images] : images_per_class) {
        counts[cls] = static_cast<std::int64_t>(images.size());
    }
    return counts;
}

int run_pseudolabel(const CLI::App& cmd, PseudolabelArgs args) {
    const json config = load_config_file(args.config);
    apply_config(cmd, config, "--catalog", "catalog", args.catalog);
    apply_config(cmd, config, "--strategy", "strategy", args.strategy);
    apply_config(cmd, config, "--out", "out", args.out);
    apply_config(cmd, config, "--detections", "detections", args.detections);
    apply_config(cmd, config, "--gold", "gold", args.gold);
    apply_config(cmd, config, "--images-root", "images_root", args.images_root);
    apply_config(cmd, config, "--conf-threshold", "conf_threshold", args.conf_threshold);
    apply_config(cmd, config, "--nms-iou", "nms_iou", args.nms_iou);
    apply_config(cmd, config, "--gamma", "gamma", args.gamma);
    apply_config(cmd, config, "--base", "base", args.base);
    apply_config(cmd, config, "--no-dedup", "no_dedup", args.no_dedup);
    apply_config(cmd, config, "--fallback-fixed", "fallback_fixed", args.fallback_fixed);
    apply_env(cmd, "--oracle-url", kEnvOracleUrl, args.oracle_url);
    apply_env(cmd, "--oracle-token", kEnvOracleToken, args.oracle_token);
    apply_config(cmd, config, "--oracle-table", "oracle_table", args.oracle_table);
    apply_config(cmd, config, "--oracle-url", "oracle_url", args.oracle_url);
    apply_config(cmd, config, "--oracle-token", "oracle_token", args.oracle_token);
    apply_config(cmd, config, "--patch-color", "patch_color", args.patch_color);
    apply_config(cmd, config, "--timeout", "timeout", args.timeout_seconds);
    apply_config(cmd, config, "--retries", "retries", args.retries);
    apply_config(cmd, config, "--lore-top-k", "lore_top_k", args.lore_top_k);
    apply_config(cmd, config, "--lore-nms-iou", "lore_nms_iou", args.lore_nms_iou);
    apply_config(cmd, config, "--lore-stop-confidence", "lore_stop_confidence",
                 args.lore_stop_confidence);
    apply_config(cmd, config, "--lore-ratio", "lore_ratio", args.lore_ratio);
    apply_config(cmd, config, "--jobs", "jobs", args.jobs);

    require_given(args.catalog, "--catalog");
    require_given(args.out, "--out");
    require_input(args.catalog, "object-centric catalog");
    require_jobs(args.jobs);

    const psl::Strategy strategy = strategy_from_flag(args.strategy);
    const bool needs_detections = strategy == psl::Strategy::D || strategy == psl::Strategy::Dt ||
                                  strategy == psl::Strategy::Dc ||
                                  strategy == psl::Strategy::LORE;
    if (needs_detections) {
        require_given(args.detections, "--detections");
        require_input(args.detections, "detections file");
    }
    if (strategy == psl::Strategy::Dc) {
        require_given(args.gold, "--gold");
        require_input(args.gold, "gold dataset");
    }

    std::unique_ptr<orc::Oracle> oracle;
    if (strategy == psl::Strategy::LORE) {
        if (!args.oracle_table.empty() && !args.oracle_url.empty()) {
            throw ConfigError("choose one of --oracle-table and --oracle-url");
        }
        if (args.oracle_table.empty() && args.oracle_url.empty()) {
            throw ConfigError("strategy lore needs --oracle-table or --oracle-url");
        }
        if (args.patch_color.size() != 3) {
            throw ConfigError("--patch-color takes exactly three values");
        }
        for (int channel : args.patch_color) {
            if (channel < 0 || channel > 255) {
                throw ConfigError("--patch-color channels must lie in [0,255]");
            }
        }
        if (!args.oracle_table.empty()) {
            require_input(args.oracle_table, "oracle table");
            oracle = std::make_unique<orc::FileOracle>(orc::FileOracle::from_file(args.oracle_table));
        } else {
            orc::HttpOracleConfig oracle_config;
            oracle_config.base_url = args.oracle_url;
            oracle_config.bearer_token = args.oracle_token;
            oracle_config.patch_color = {args.patch_color[0], args.patch_color[1],
                                         args.patch_color[2]};
            oracle_config.timeout_seconds = args.timeout_seconds;
            oracle_config.retries = args.retries;
            oracle = std::make_unique<orc::HttpOracle>(std::move(oracle_config));
        }
    }

    const auto catalog = cat::parse_oci_catalog(args.catalog);
    std::vector<CatalogEntry> entries;
    std::vector<dio::CocoCategory> categories;
    for (const auto& oci_class : catalog) {
        dio::CocoCategory category;
        category.id = oci_class.class_id;
        category.name = oci_class.name;
        category.synset = oci_class.synset_id;
        categories.push_back(std::move(category));
        for (const auto& path : oci_class.image_paths) {
            CatalogEntry entry;
            entry.image_id = static_cast<std::int64_t>(entries.size()) + 1;
            entry.class_id = oci_class.class_id;
            entry.file_name = path;
            entries.push_back(std::move(entry));
        }
    }

    std::map<std::int64_t, std::vector<psl::DetectionRecord>> detections;
    if (needs_detections) {
        detections = dio::parse_detections(args.detections);
    }
    std::map<int, double> thresholds;
    if (strategy == psl::Strategy::Dc) {
        const auto counts = gold_image_counts(dio::parse_coco(args.gold));
        if (counts.empty()) {
            throw ConfigError("gold dataset has no annotations to calibrate on");
        }
        thresholds = cat::calibrated_thresholds(counts, args.gamma, args.base);
    }

    psl::LoreParams lore_params;
    lore_params.prefilter_top_k = args.lore_top_k;
    lore_params.prefilter_nms_iou = args.lore_nms_iou;
    lore_params.prefilter_stop_confidence = args.lore_stop_confidence;
    lore_params.reduce_ratio_threshold = args.lore_ratio;

    struct PerImage {
        int width = 0;
        int height = 0;
        std::vector<psl::PseudoAnnotation> annotations;
        std::optional<std::string> warning;
    };
    std::vector<PerImage> results(entries.size());
    const std::vector<psl::DetectionRecord> no_records;

    parallel_for(entries.size(), args.jobs, [&](std::size_t i) {
        const auto& entry = entries[i];
        const std::string path = joined_path(args.images_root, entry.file_name);
        const auto image = read_image_rgb(path);
        auto& result = results[i];
        result.width = image.width;
        result.height = image.height;

        auto records_it = detections.find(entry.image_id);
        const auto& records = records_it == detections.end() ? no_records : records_it->second;
        switch (strategy) {
            case psl::Strategy::F:
                result.annotations = psl::strategy_fixed(entry.image_id, image.width,
                                                         image.height, entry.class_id);
                break;
            case psl::Strategy::S:
                result.annotations = psl::strategy_single(entry.image_id, image.width,
                                                          image.height, entry.class_id);
                break;
            case psl::Strategy::D:
                result.annotations =
                    psl::strategy_detector(records, args.conf_threshold, args.nms_iou);
                break;
            case psl::Strategy::Dt:
                result.annotations = psl::strategy_detector_relabel(
                    records, args.conf_threshold, args.nms_iou, entry.class_id, !args.no_dedup);
                break;
            case psl::Strategy::Dc:
                result.annotations = psl::strategy_calibrated_relabel(
                    records, thresholds, args.nms_iou, entry.class_id, !args.no_dedup);
                break;
            case psl::Strategy::LORE: {
                auto lore_result = psl::lore(records, *oracle, entry.class_id, lore_params);
                result.annotations = std::move(lore_result.annotations);
                result.warning = std::move(lore_result.warning);
                break;
            }
        }
        const bool can_fall_back = strategy == psl::Strategy::D || strategy == psl::Strategy::Dt ||
                                   strategy == psl::Strategy::Dc;
        if (result.annotations.empty() && can_fall_back && args.fallback_fixed) {
            result.annotations = psl::strategy_fixed(entry.image_id, image.width, image.height,
                                                     entry.class_id);
        }
    });

    dio::CocoDataset dataset;
    dataset.categories = std::move(categories);
    dataset.extra["info"] = {{"tool", std::string(pseudoscene::kToolName)},
                             {"version", std::string(pseudoscene::kToolVersion)},
                             {"strategy", psl::to_string(strategy)}};
    std::int64_t annotation_id = 1;
    std::int64_t boxes = 0;
    std::int64_t empty_images = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& entry = entries[i];
        const auto& result = results[i];
        dio::CocoImage image;
        image.id = entry.image_id;
        image.file_name = entry.file_name;
        image.width = result.width;
        image.height = result.height;
        image.extra["label"] = entry.class_id;
        dataset.images.push_back(std::move(image));

        if (result.warning) {
            log_kv("lore_warning", {{"image", std::to_string(entry.image_id)},
                                    {"message", *result.warning}});
        }
        if (result.annotations.empty()) {
            ++empty_images;
        }
        for (const auto& annotation : result.annotations) {
            dio::CocoAnnotation row;
            row.id = annotation_id++;
            row.image_id = annotation.image_id;
            row.category_id = annotation.class_id;
            row.bbox = annotation.box;
            row.area = annotation.box.area();
            row.iscrowd = 0;
            row.strategy = psl::to_string(annotation.strategy);
            row.source_score = annotation.source_score;
            dataset.annotations.push_back(std::move(row));
            ++boxes;
        }
    }

    // Strategy d keeps the detector's label space, which may reach past the
    // catalog. Missing categories get placeholder rows so the output stays
    // self-consistent.
    std::set<int> known_categories;
    for (const auto& category : dataset.categories) {
        known_categories.insert(category.id);
    }
    std::set<int> unknown_categories;
    for (const auto& annotation : dataset.annotations) {
        if (known_categories.find(annotation.category_id) == known_categories.end()) {
            unknown_categories.insert(annotation.category_id);
        }
    }
    for (int id : unknown_categories) {
        dio::CocoCategory category;
        category.id = id;
        category.name = "detector_class_" + std::to_string(id);
        dataset.categories.push_back(std::move(category));
        log_kv("synthesized_category", {{"class", std::to_string(id)}});
    }

    ensure_dir(args.out);
    dio::emit_coco(dataset, (fs::path(args.out) / "pseudo_annotations.json").string());
    write_effective_config(
        args.out,
        json{{"command", "pseudolabel"},
             {"catalog", args.catalog},
             {"strategy", psl::to_string(strategy)},
             {"out", args.out},
             {"detections", args.detections},
             {"gold", args.gold},
             {"images_root", args.images_root},
             {"conf_threshold", args.conf_threshold},
             {"nms_iou", args.nms_iou},
             {"gamma", args.gamma},
             {"base", args.base},
             {"dedup", !args.no_dedup},
             {"fallback_fixed", args.fallback_fixed},
             {"oracle_table", args.oracle_table},
             {"oracle_url", args.oracle_url},
             {"oracle_token_set", !args.oracle_token.empty()},
             {"patch_color", args.patch_color},
             {"timeout", args.timeout_seconds},
             {"retries", args.retries},
             {"lore_top_k", args.lore_top_k},
             {"lore_nms_iou", args.lore_nms_iou},
             {"lore_stop_confidence", args.lore_stop_confidence},
             {"lore_ratio", args.lore_ratio},
             {"jobs", args.jobs}});
    log_kv("pseudolabel", {{"strategy", psl::to_string(strategy)},
                           {"images", std::to_string(entries.size())},
                           {"boxes", std::to_string(boxes)},
                           {"empty_images", std::to_string(empty_images)}});
    return 0;
}

// ---------------------------------------------------------------------------
// mosaic

struct MosaicArgs {
    std::string config;
    std::string annotations;
    std::string out;
    std::string images_root;
    std::string grid = "2x2";
    std::string sampling = "same_class";
    std::int64_t count = -1;
    std::uint64_t seed = 0;
    int cell_w = 512;
    int cell_h = 512;
    std::int64_t first_id = 1;
    int jobs = 1;
};

int run_mosaic(const CLI::App& cmd, MosaicArgs args) {
    const json config = load_config_file(args.config);
    apply_config(cmd, config, "--annotations", "annotations", args.annotations);
    apply_config(cmd, config, "--out", "out", args.out);
    apply_config(cmd, config, "--images-root", "images_root", args.images_root);
    apply_config(cmd, config, "--grid", "grid", args.grid);
    apply_config(cmd, config, "--sampling", "sampling", args.sampling);
    apply_config(cmd, config, "--count", "count", args.count);
    apply_config(cmd, config, "--cell-w", "cell_w", args.cell_w);
    apply_config(cmd, config, "--cell-h", "cell_h", args.cell_h);
    apply_config(cmd, config, "--first-id", "first_id", args.first_id);
    apply_config(cmd, config, "--jobs", "jobs", args.jobs);

    require_given(args.annotations, "--annotations");
    require_given(args.out, "--out");
    if (cmd.count("--seed") == 0 && !config.contains("seed")) {
        throw ConfigError("--seed is required");
    }
    apply_config(cmd, config, "--seed", "seed", args.seed);
    if (args.count < 0) {
        throw ConfigError("--count is required and must be non-negative");
    }
    require_input(args.annotations, "annotation dataset");
    require_jobs(args.jobs);

    mos::Grid grid;
    mos::SamplingMode sampling;
    try {
        grid = mos::grid_from_string(args.grid);
        sampling = mos::sampling_mode_from_string(args.sampling);
    } catch (const pseudoscene::InvalidArgument& e) {
        throw ConfigError(e.what());
    }

    const auto dataset = dio::parse_coco(args.annotations);
    std::map<std::int64_t, int> first_annotation_class;
    for (const auto& annotation : dataset.annotations) {
        first_annotation_class.emplace(annotation.image_id, annotation.category_id);
    }

    std::vector<mos::PoolImage> pool;
    std::map<std::int64_t, std::string> paths;
    std::map<std::int64_t, std::pair<int, int>> dims;
    std::int64_t unlabeled = 0;
    for (const auto& image : dataset.images) {
        paths[image.id] = joined_path(args.images_root, image.file_name);
        dims[image.id] = {image.width, image.height};
        int class_id = 0;
        if (image.extra.contains("label") && image.extra["label"].is_number_integer()) {
            class_id = image.extra["label"].get<int>();
        } else if (auto it = first_annotation_class.find(image.id);
                   it != first_annotation_class.end()) {
            class_id = it->second;
        } else {
            ++unlabeled;
            log_kv("mosaic_pool_skip",
                   {{"image", std::to_string(image.id)}, {"reason", "no label"}});
            continue;
        }
        pool.push_back(mos::PoolImage{image.id, class_id});
    }

    const auto plans = mos::plan_mosaics(pool, grid, sampling, args.count, args.seed, args.cell_w,
                                         args.cell_h, args.first_id);

    ensure_dir(args.out);
    ensure_dir((fs::path(args.out) / "images").string());

    json plan_doc;
    plan_doc["tool"] = std::string(pseudoscene::kToolName);
    plan_doc["version"] = std::string(pseudoscene::kToolVersion);
    plan_doc["grid"] = mos::to_string(grid);
    plan_doc["sampling_mode"] = mos::to_string(sampling);
    plan_doc["seed"] = args.seed;
    plan_doc["cell_w"] = args.cell_w;
    plan_doc["cell_h"] = args.cell_h;
    plan_doc["rng"] = "splitmix64";
    plan_doc["resize"] = "bilinear_center_aligned";
    plan_doc["source_images"] = pool.size();
    plan_doc["plans"] = mos::plans_to_json(plans);
    dio::write_json_file(plan_doc, (fs::path(args.out) / "mosaic_plans.json").string());

    // Per-source annotations, plus the strategy strings riding alongside:
    // remapped rows come back in (cell, source-annotation) order, so the
    // metadata can be re-joined positionally.
    std::map<std::int64_t, std::vector<psl::PseudoAnnotation>> per_image;
    std::map<std::int64_t, std::vector<std::optional<std::string>>> strategy_strings;
    for (const auto& image : dataset.images) {
        per_image[image.id];
        strategy_strings[image.id];
    }
    for (const auto& annotation : dataset.annotations) {
        psl::PseudoAnnotation pseudo;
        pseudo.image_id = annotation.image_id;
        pseudo.box = annotation.bbox;
        pseudo.class_id = annotation.category_id;
        pseudo.strategy = annotation.strategy ? psl::strategy_from_string(*annotation.strategy)
                                              : psl::Strategy::S;
        pseudo.source_score = annotation.source_score;
        per_image[annotation.image_id].push_back(std::move(pseudo));
        strategy_strings[annotation.image_id].push_back(annotation.strategy);
    }

    const FileImageLoader loader(paths);
    std::vector<img::Image> composites(plans.size());
    parallel_for(plans.size(), args.jobs, [&](std::size_t i) {
        auto composed = mos::compose(plans[i], loader);
        const std::string path =
            (fs::path(args.out) / "images" / (std::to_string(composed.mosaic_id) + ".png"))
                .string();
        write_image_rgb(composed.image, path);
        composites[i] = std::move(composed.image);
    });

    dio::CocoDataset out_dataset;
    out_dataset.categories = dataset.categories;
    out_dataset.extra["info"] = {{"tool", std::string(pseudoscene::kToolName)},
                                 {"version", std::string(pseudoscene::kToolVersion)},
                                 {"seed", args.seed},
                                 {"grid", mos::to_string(grid)},
                                 {"sampling_mode", mos::to_string(sampling)},
                                 {"source_annotations", args.annotations}};
    std::int64_t annotation_id = 1;
    std::int64_t skipped = 0;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const auto& plan = plans[i];
        dio::CocoImage image;
        image.id = plan.mosaic_id;
        image.file_name = "images/" + std::to_string(plan.mosaic_id) + ".png";
        image.width = composites[i].width;
        image.height = composites[i].height;
        out_dataset.images.push_back(std::move(image));

        const auto remapped = mos::remap_annotations(plan, plan.mosaic_id, per_image, dims);
        skipped += remapped.skipped;
        std::size_t row = 0;
        for (std::int64_t source_id : plan.cells) {
            const auto& source_strategies = strategy_strings.at(source_id);
            for (const auto& strategy : source_strategies) {
                const auto& annotation = remapped.annotations.at(row++);
                dio::CocoAnnotation out_row;
                out_row.id = annotation_id++;
                out_row.image_id = annotation.image_id;
                out_row.category_id = annotation.class_id;
                out_row.bbox = annotation.box;
                out_row.area = annotation.box.area();
                out_row.iscrowd = 0;
                out_row.strategy = strategy;
                out_row.source_score = annotation.source_score;
                out_dataset.annotations.push_back(std::move(out_row));
            }
        }
    }
    dio::emit_coco(out_dataset, (fs::path(args.out) / "mosaic_annotations.json").string());

    write_effective_config(args.out, json{{"command", "mosaic"},
                                          {"annotations", args.annotations},
                                          {"out", args.out},
                                          {"images_root", args.images_root},
                                          {"grid", mos::to_string(grid)},
                                          {"sampling", mos::to_string(sampling)},
                                          {"count", args.count},
                                          {"seed", args.seed},
                                          {"cell_w", args.cell_w},
                                          {"cell_h", args.cell_h},
                                          {"first_id", args.first_id},
                                          {"jobs", args.jobs}});
    log_kv("mosaic", {{"plans", std::to_string(plans.size())},
                      {"pool", std::to_string(pool.size())},
                      {"unlabeled", std::to_string(unlabeled)},
                      {"annotations", std::to_string(out_dataset.annotations.size())},
                      {"skipped", std::to_string(skipped)}});
    return 0;
}

// ---------------------------------------------------------------------------
// manifest

struct ManifestArgs {
    std::string config;
    std::string gold = "gold.json";
    std::string pseudo = "pseudo.json";
    int batch = 16;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double lr = 2e-4;
    std::int64_t iterations = 90000;
    std::string mode = "detection";
    bool cls_only = false;
    std::string out = "training_manifest.json";
};

int run_manifest(const CLI::App& cmd, ManifestArgs args) {
    const json config = load_config_file(args.config);
    apply_config(cmd, config, "--gold", "gold", args.gold);
    apply_config(cmd, config, "--pseudo", "pseudo", args.pseudo);
    apply_config(cmd, config, "--batch", "batch", args.batch);
    apply_config(cmd, config, "--momentum", "momentum", args.momentum);
    apply_config(cmd, config, "--weight-decay", "weight_decay", args.weight_decay);
    apply_config(cmd, config, "--lr", "lr", args.lr);
    apply_config(cmd, config, "--iterations", "iterations", args.iterations);
    apply_config(cmd, config, "--mode", "mode", args.mode);
    apply_config(cmd, config, "--cls-only", "cls_only", args.cls_only);
    apply_config(cmd, config, "--out", "out", args.out);

    dio::ManifestConfig manifest_config;
    manifest_config.gold_dataset_path = args.gold;
    manifest_config.pseudo_dataset_path = args.pseudo;
    manifest_config.batch_size = args.batch;
    manifest_config.momentum = args.momentum;
    manifest_config.weight_decay = args.weight_decay;
    manifest_config.learning_rate = args.lr;
    manifest_config.finetune_iterations = args.iterations;
    if (args.mode == "detection") {
        manifest_config.mode = dio::ManifestMode::Detection;
    } else if (args.mode == "segmentation") {
        manifest_config.mode = dio::ManifestMode::Segmentation;
    } else {
        throw ConfigError("--mode must be detection or segmentation");
    }
    manifest_config.cls_only_finetune = args.cls_only;

    auto out_dir = fs::path(args.out).parent_path();
    if (out_dir.empty()) {
        out_dir = ".";
    }
    ensure_dir(out_dir.string());
    dio::emit_manifest(manifest_config, args.out);
    write_effective_config(out_dir.string(), json{{"command", "manifest"},
                                                  {"gold", args.gold},
                                                  {"pseudo", args.pseudo},
                                                  {"batch", args.batch},
                                                  {"momentum", args.momentum},
                                                  {"weight_decay", args.weight_decay},
                                                  {"lr", args.lr},
                                                  {"iterations", args.iterations},
                                                  {"mode", args.mode},
                                                  {"cls_only", args.cls_only},
                                                  {"out", args.out}});
    log_kv("manifest", {{"stages", "4"}, {"mode", args.mode}, {"out", args.out}});
    return 0;
}

// ---------------------------------------------------------------------------
// preview

struct PreviewArgs {
    std::string config;
    std::string annotations;
    std::string out;
    std::string images_root;
    std::vector<std::int64_t> ids;
    int jobs = 1;
};

int run_preview(const CLI::App& cmd, PreviewArgs args) {
    const json config = load_config_file(args.config);
    apply_config(cmd, config, "--annotations", "annotations", args.annotations);
    apply_config(cmd, config, "--out", "out", args.out);
    apply_config(cmd, config, "--images-root", "images_root", args.images_root);
    apply_config(cmd, config, "--ids", "ids", args.ids);
    apply_config(cmd, config, "--jobs", "jobs", args.jobs);
    require_given(args.annotations, "--annotations");
    require_given(args.out, "--out");
    require_input(args.annotations, "annotation dataset");
    require_jobs(args.jobs);

    const auto dataset = dio::parse_coco(args.annotations);
    std::map<int, std::string> names;
    for (const auto& category : dataset.categories) {
        names[category.id] = category.name;
    }
    std::map<std::int64_t, std::vector<const dio::CocoAnnotation*>> by_image;
    for (const auto& annotation : dataset.annotations) {
        by_image[annotation.image_id].push_back(&annotation);
    }

    std::vector<const dio::CocoImage*> selected;
    if (args.ids.empty()) {
        for (const auto& image : dataset.images) {
            selected.push_back(&image);
        }
    } else {
        std::map<std::int64_t, const dio::CocoImage*> by_id;
        for (const auto& image : dataset.images) {
            by_id[image.id] = &image;
        }
        for (std::int64_t id : args.ids) {
            auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw pseudoscene::InvalidArgument("unknown image id " + std::to_string(id));
            }
            selected.push_back(it->second);
        }
    }

    ensure_dir(args.out);
    std::atomic<std::int64_t> drawn{0};
    std::atomic<std::int64_t> copied{0};
    parallel_for(selected.size(), args.jobs, [&](std::size_t i) {
        const auto& image = *selected[i];
        const std::string source = joined_path(args.images_root, image.file_name);
        const std::string base = fs::path(image.file_name).filename().string();
        const std::string target =
            (fs::path(args.out) / (std::to_string(image.id) + "_" + base)).string();

        auto it = by_image.find(image.id);
        if (it == by_image.end() || it->second.empty()) {
            require_input(source, "source image");
            fs::copy_file(source, target, fs::copy_options::overwrite_existing);
            ++copied;
            return;
        }
        cv::Mat bgr = cv::imread(source, cv::IMREAD_COLOR);
        if (bgr.empty()) {
            throw IoError("cannot decode image: " + source);
        }
        const cv::Scalar red(0, 0, 255);
        for (const auto* annotation : it->second) {
            const auto& box = annotation->bbox;
            // rectangle() drops shapes whose corners fall outside the canvas,
            // so boundary boxes are clamped to the last pixel row/column.
            const cv::Point top_left(
                std::max(0, static_cast<int>(std::lround(box.x))),
                std::max(0, static_cast<int>(std::lround(box.y))));
            const cv::Point bottom_right(
                std::min(bgr.cols - 1, static_cast<int>(std::lround(box.x2()))),
                std::min(bgr.rows - 1, static_cast<int>(std::lround(box.y2()))));
            cv::rectangle(bgr, top_left, bottom_right, red, 1);
            auto name_it = names.find(annotation->category_id);
            const std::string text = name_it == names.end()
                                         ? std::to_string(annotation->category_id)
                                         : name_it->second;
            cv::putText(bgr, text, cv::Point(top_left.x, std::max(top_left.y - 4, 12)),
                        cv::FONT_HERSHEY_SIMPLEX, 0.4, red, 1);
        }
        if (!cv::imwrite(target, bgr)) {
            throw IoError("cannot write image: " + target);
        }
        ++drawn;
    });

    write_effective_config(args.out, json{{"command", "preview"},
                                          {"annotations", args.annotations},
                                          {"out", args.out},
                                          {"images_root", args.images_root},
                                          {"ids", args.ids},
                                          {"jobs", args.jobs}});
    log_kv("preview", {{"images", std::to_string(selected.size())},
                       {"drawn", std::to_string(drawn.load())},
                       {"copied", std::to_string(copied.load())}});
    return 0;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
    std::string config;
    std::string dataset;
};

int run_validate(const CLI::App& cmd, ValidateArgs args) {
    const json config = load_config_file(args.config);
    apply_config(cmd, config, "--dataset", "dataset", args.dataset);
    require_given(args.dataset, "--dataset");
    require_input(args.dataset, "dataset");

    const auto dataset = dio::parse_coco(args.dataset);
    const auto report = dio::validate_dataset(dataset);
    std::cout << dio::report_to_json(report).dump(2) << '\n';
    log_kv("validate", {{"dataset", args.dataset},
                        {"fatal", std::to_string(report.fatal_count())},
                        {"warnings", std::to_string(report.warning_count())}});
    return report.fatal_count() == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pseudo scene-centric dataset synthesis"};
    app.set_version_flag("--version", std::string(pseudoscene::kToolVersion));
    app.require_subcommand(1);

    AnalyzeArgs analyze_args;
    auto* analyze = app.add_subcommand("analyze", "class frequency report over a gold dataset");
    analyze->add_option("--config", analyze_args.config, "JSON config file");
    analyze->add_option("--gold", analyze_args.gold, "gold scene-centric dataset (COCO JSON)");
    analyze->add_option("--oci", analyze_args.oci, "object-centric catalog (JSON)");
    analyze->add_option("--out", analyze_args.out, "output directory");

    PseudolabelArgs pseudolabel_args;
    auto* pseudolabel =
        app.add_subcommand("pseudolabel", "pseudo-label an object-centric catalog");
    pseudolabel->add_option("--config", pseudolabel_args.config, "JSON config file");
    pseudolabel->add_option("--catalog", pseudolabel_args.catalog, "object-centric catalog");
    pseudolabel->add_option("--strategy", pseudolabel_args.strategy, "labeling strategy")
        ->check(CLI::IsMember({"f", "s", "d", "dt", "dc", "lore"}));
    pseudolabel->add_option("--out", pseudolabel_args.out, "output directory");
    pseudolabel->add_option("--detections", pseudolabel_args.detections,
                            "detector results (COCO results JSON)");
    pseudolabel->add_option("--gold", pseudolabel_args.gold,
                            "gold dataset for threshold calibration (dc)");
    pseudolabel->add_option("--images-root", pseudolabel_args.images_root,
                            "directory that catalog image paths are relative to");
    pseudolabel->add_option("--conf-threshold", pseudolabel_args.conf_threshold,
                            "detector score cut (d, dt)");
    pseudolabel->add_option("--nms-iou", pseudolabel_args.nms_iou, "suppression IoU threshold");
    pseudolabel->add_option("--gamma", pseudolabel_args.gamma, "calibration exponent (dc)");
    pseudolabel->add_option("--base", pseudolabel_args.base, "calibration base threshold (dc)");
    pseudolabel->add_flag("--no-dedup", pseudolabel_args.no_dedup,
                          "skip class-agnostic dedup after relabeling (dt, dc)");
    pseudolabel->add_flag("--fallback-fixed", pseudolabel_args.fallback_fixed,
                          "fixed-location boxes for images the detector left empty (d, dt, dc)");
    pseudolabel->add_option("--oracle-table", pseudolabel_args.oracle_table,
                            "file-backed oracle table (lore)");
    pseudolabel->add_option("--oracle-url", pseudolabel_args.oracle_url,
                            "classifier service endpoint (lore)");
    pseudolabel->add_option("--oracle-token", pseudolabel_args.oracle_token,
                            "bearer token for the classifier service");
    pseudolabel->add_option("--patch-color", pseudolabel_args.patch_color,
                            "RGB fill for removed regions (lore)")
        ->expected(3);
    pseudolabel->add_option("--timeout", pseudolabel_args.timeout_seconds,
                            "oracle request timeout, seconds");
    pseudolabel->add_option("--retries", pseudolabel_args.retries, "oracle request retries");
    pseudolabel->add_option("--lore-top-k", pseudolabel_args.lore_top_k,
                            "prefilter candidate cap");
    pseudolabel->add_option("--lore-nms-iou", pseudolabel_args.lore_nms_iou,
                            "prefilter suppression IoU");
    pseudolabel->add_option("--lore-stop-confidence", pseudolabel_args.lore_stop_confidence,
                            "prefilter cumulative-removal stop");
    pseudolabel->add_option("--lore-ratio", pseudolabel_args.lore_ratio,
                            "confidence-reduction stop ratio");
    pseudolabel->add_option("--jobs", pseudolabel_args.jobs, "worker threads");

    MosaicArgs mosaic_args;
    auto* mosaic = app.add_subcommand("mosaic", "compose labeled images into mosaics");
    mosaic->add_option("--config", mosaic_args.config, "JSON config file");
    mosaic->add_option("--annotations", mosaic_args.annotations,
                       "annotated source dataset (COCO JSON)");
    mosaic->add_option("--out", mosaic_args.out, "output directory");
    mosaic->add_option("--images-root", mosaic_args.images_root,
                       "directory that image paths are relative to");
    mosaic->add_option("--grid", mosaic_args.grid, "mosaic grid")
        ->check(CLI::IsMember({"2x2", "3x3"}));
    mosaic->add_option("--sampling", mosaic_args.sampling, "cell sampling mode")
        ->check(CLI::IsMember({"same_class", "hybrid"}));
    mosaic->add_option("--count", mosaic_args.count, "number of mosaics");
    mosaic->add_option("--seed", mosaic_args.seed, "sampling seed (required)");
    mosaic->add_option("--cell-w", mosaic_args.cell_w, "cell width, pixels");
    mosaic->add_option("--cell-h", mosaic_args.cell_h, "cell height, pixels");
    mosaic->add_option("--first-id", mosaic_args.first_id, "id of the first composite");
    mosaic->add_option("--jobs", mosaic_args.jobs, "worker threads");

    ManifestArgs manifest_args;
    auto* manifest = app.add_subcommand("manifest", "write the four-stage training manifest");
    manifest->add_option("--config", manifest_args.config, "JSON config file");
    manifest->add_option("--gold", manifest_args.gold, "gold dataset path to reference");
    manifest->add_option("--pseudo", manifest_args.pseudo, "pseudo dataset path to reference");
    manifest->add_option("--batch", manifest_args.batch, "batch size");
    manifest->add_option("--momentum", manifest_args.momentum, "SGD momentum");
    manifest->add_option("--weight-decay", manifest_args.weight_decay, "weight decay");
    manifest->add_option("--lr", manifest_args.lr, "learning rate");
    manifest->add_option("--iterations", manifest_args.iterations, "fine-tune iterations");
    manifest->add_option("--mode", manifest_args.mode, "detection or segmentation")
        ->check(CLI::IsMember({"detection", "segmentation"}));
    manifest->add_flag("--cls-only", manifest_args.cls_only,
                       "first fine-tune updates the classification head only");
    manifest->add_option("--out", manifest_args.out, "output manifest path");

    PreviewArgs preview_args;
    auto* preview = app.add_subcommand("preview", "draw annotation overlays for inspection");
    preview->add_option("--config", preview_args.config, "JSON config file");
    preview->add_option("--annotations", preview_args.annotations,
                        "annotated dataset (COCO JSON)");
    preview->add_option("--out", preview_args.out, "output directory");
    preview->add_option("--images-root", preview_args.images_root,
                        "directory that image paths are relative to");
    preview->add_option("--ids", preview_args.ids, "image ids to render (default: all)");
    preview->add_option("--jobs", preview_args.jobs, "worker threads");

    ValidateArgs validate_args;
    auto* validate = app.add_subcommand("validate", "structural checks over a dataset file");
    validate->add_option("--config", validate_args.config, "JSON config file");
    validate->add_option("--dataset", validate_args.dataset, "dataset file (COCO JSON)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(analyze)) {
            return run_analyze(*analyze, analyze_args);
        }
        if (app.got_subcommand(pseudolabel)) {
            return run_pseudolabel(*pseudolabel, pseudolabel_args);
        }
        if (app.got_subcommand(mosaic)) {
            return run_mosaic(*mosaic, mosaic_args);
        }
        if (app.got_subcommand(manifest)) {
            return run_manifest(*manifest, manifest_args);
        }
        if (app.got_subcommand(preview)) {
            return run_preview(*preview, preview_args);
        }
        if (app.got_subcommand(validate)) {
            return run_validate(*validate, validate_args);
        }
    } catch (const ConfigError& e) {
        log_kv("error", {{"kind", "config"}, {"message", e.what()}});
        return 2;
    } catch (const pseudoscene::Error& e) {
        log_kv("error", {{"kind", "data"}, {"message", e.what()}});
        return 1;
    } catch (const std::exception& e) {
        log_kv("error", {{"kind", "internal"}, {"message", e.what()}});
        return 1;
    }
    return 2;
}
