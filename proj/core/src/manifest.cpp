#include "kcal/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "kcal/error.hpp"
#include "kcal/rng.hpp"

namespace kcal {
namespace {

constexpr const char* kHeader = "image_path,calories,mass,class_label,annotation_path";

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, int line_no, const char* field) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value))
        fail(errc::malformed_row,
             "line " + std::to_string(line_no) + ": bad " + field + " value '" + s + "'");
    return value;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace

std::filesystem::path Manifest::resolve(const std::string& p) const {
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return fp;
    return base_dir / fp;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(errc::missing_file, "manifest not found: " + path.string());

    Manifest m;
    m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

    std::string line;
    if (!std::getline(in, line)) fail(errc::malformed_row, "line 1: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        fail(errc::malformed_row, "line 1: header must be '" + std::string(kHeader) + "'");

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        auto fields = split_fields(line);
        if (fields.size() != 5)
            fail(errc::malformed_row,
                 "line " + std::to_string(line_no) + ": expected 5 fields, got " +
                     std::to_string(fields.size()));

        ManifestRecord rec;
        rec.image_path = fields[0];
        if (rec.image_path.empty())
            fail(errc::malformed_row, "line " + std::to_string(line_no) + ": empty image_path");

        double cal = parse_double(fields[1], line_no, "calories");
        if (cal < 0.0)
            fail(errc::negative_calories,
                 "line " + std::to_string(line_no) + ": negative calories " + fields[1]);
        rec.calories = cal;

        if (!fields[2].empty()) {
            double mass = parse_double(fields[2], line_no, "mass");
            if (mass < 0.0)
                fail(errc::malformed_row,
                     "line " + std::to_string(line_no) + ": negative mass " + fields[2]);
            rec.mass = mass;
        }
        if (!fields[3].empty()) rec.class_label = fields[3];
        if (!fields[4].empty()) rec.annotation_path = fields[4];

        std::ifstream img(m.resolve(rec.image_path), std::ios::binary);
        if (!img)
            fail(errc::dangling_image_path,
                 "line " + std::to_string(line_no) + ": image not readable: " + rec.image_path);

        m.records.push_back(std::move(rec));
    }
    return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::unwritable_path, "cannot write manifest: " + path.string());
    out << kHeader << "\n";
    for (const auto& rec : manifest.records) {
        out << rec.image_path << ',' << format_double(rec.calories) << ',';
        if (rec.mass) out << format_double(*rec.mass);
        out << ',';
        if (rec.class_label) out << *rec.class_label;
        out << ',';
        if (rec.annotation_path) out << *rec.annotation_path;
        out << "\n";
    }
}

SplitResult split_dataset(const Manifest& manifest, const SplitSpec& spec) {
    if (manifest.records.empty()) fail(errc::empty_manifest, "cannot split an empty manifest");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        fail(errc::invalid_config, "train_fraction must be in (0,1)");

    const std::size_t n = manifest.records.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);

    SplitMix64 rng(spec.seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = rng.next_below(i + 1);
        std::swap(idx[i], idx[j]);
    }

    auto train_size = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n)));

    std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_size));
    std::vector<std::size_t> val_idx(idx.begin() + static_cast<std::ptrdiff_t>(train_size), idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    SplitResult out;
    out.train.base_dir = manifest.base_dir;
    out.validation.base_dir = manifest.base_dir;
    for (std::size_t i : train_idx) out.train.records.push_back(manifest.records[i]);
    for (std::size_t i : val_idx) out.validation.records.push_back(manifest.records[i]);
    out.empty_train = train_size == 0;
    return out;
}

std::vector<std::string> collect_class_labels(const std::vector<const Manifest*>& manifests) {
    std::set<std::string> labels;
    for (const Manifest* m : manifests)
        for (const auto& rec : m->records)
            if (rec.class_label) labels.insert(*rec.class_label);
    return {labels.begin(), labels.end()};
}

} // namespace kcal
