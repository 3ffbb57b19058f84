#include "posal/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "posal/image_io.hpp"

namespace fs = std::filesystem;

namespace posal::data {

namespace {

std::string domain_to_string(DomainTag d) { return d == DomainTag::Source ? "source" : "target"; }

DomainTag domain_from_string(const std::string& s) {
    if (s == "source") return DomainTag::Source;
    if (s == "target") return DomainTag::Target;
    throw ConfigError("unknown domain tag: " + s);
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("manifest: cannot open " + path);
    nlohmann::json j;
    is >> j;
    DatasetManifest m;
    m.name = j.value("name", "");
    m.root = j.value("root", fs::path(path).parent_path().string());
    m.split = j.value("split", "train");
    m.image_dir = j.value("image_dir", "images");
    m.mask_dir = j.value("mask_dir", "masks");
    if (j.contains("encoding")) {
        m.encoding.background = j["encoding"].value("background", 255);
        m.encoding.disc_ring = j["encoding"].value("disc_ring", 128);
        m.encoding.cup = j["encoding"].value("cup", 0);
    }
    m.domain = domain_from_string(j.value("domain", "source"));
    m.with_labels = j.value("with_labels", true);
    m.skip_invalid = j.value("skip_invalid", false);
    return m;
}

void DatasetManifest::save(const std::string& path) const {
    nlohmann::json j{{"name", name},
                     {"root", root},
                     {"split", split},
                     {"image_dir", image_dir},
                     {"mask_dir", mask_dir},
                     {"encoding",
                      {{"background", encoding.background},
                       {"disc_ring", encoding.disc_ring},
                       {"cup", encoding.cup}}},
                     {"domain", domain_to_string(domain)},
                     {"with_labels", with_labels},
                     {"skip_invalid", skip_invalid}};
    std::ofstream os(path);
    if (!os) throw DataError("manifest: cannot write " + path);
    os << j.dump(2) << "\n";
}

std::vector<ImageSample> load_dataset(const DatasetManifest& manifest) {
    fs::path image_root = fs::path(manifest.root) / manifest.image_dir;
    fs::path mask_root = fs::path(manifest.root) / manifest.mask_dir;
    if (!fs::is_directory(image_root))
        throw DataError("load_dataset: missing image directory " + image_root.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(image_root))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("load_dataset: empty dataset at " + image_root.string());

    std::vector<ImageSample> out;
    for (const auto& f : files) {
        ImageSample s;
        s.id = f.stem().string();
        s.pixels = io::read_ppm(f.string());
        s.domain = manifest.domain;
        s.original_size = {s.rows(), s.cols()};
        if (manifest.with_labels) {
            fs::path mask = mask_root / (f.stem().string() + ".pgm");
            if (!fs::exists(mask))
                throw DataError("load_dataset: missing mask for " + s.id);
            try {
                auto m = decode_mask(io::read_pgm(mask.string()), manifest.encoding);
                if (m.disc.rows() != s.rows() || m.disc.cols() != s.cols())
                    throw DataError("load_dataset: mask size mismatch for " + s.id);
                s.labels = std::move(m);
            } catch (const DataError& e) {
                if (manifest.skip_invalid) continue;
                throw DataError(std::string(e.what()) + " [file " + mask.string() + "]");
            }
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw DataError("load_dataset: no valid samples in " + image_root.string());
    return out;
}

void save_dataset(const std::string& root, const std::vector<ImageSample>& samples,
                  const MaskEncoding& encoding, const std::string& name, DomainTag domain) {
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "masks");
    bool any_labels = false;
    for (const auto& s : samples) {
        io::write_ppm((fs::path(root) / "images" / (s.id + ".ppm")).string(), s.pixels);
        if (s.labels) {
            any_labels = true;
            io::write_pgm((fs::path(root) / "masks" / (s.id + ".pgm")).string(),
                          encode_mask(*s.labels, encoding));
        }
    }
    DatasetManifest m;
    m.name = name;
    m.root = root;
    m.encoding = encoding;
    m.domain = domain;
    m.with_labels = any_labels;
    m.save((fs::path(root) / "manifest.json").string());
}

namespace {

struct SampleGeometry {
    double cr, cc, vsemi, hsemi, ratio;
    double cup_cr, cup_cc;
};

SampleGeometry draw_geometry(const SynthConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    SampleGeometry g;
    double s = cfg.image_size;
    g.vsemi = (cfg.disc_radius_min + (cfg.disc_radius_max - cfg.disc_radius_min) * u01(rng)) * s;
    g.hsemi = g.vsemi * (0.85 + 0.3 * u01(rng));
    g.cr = s * (0.3 + 0.4 * u01(rng));
    g.cc = s * (0.3 + 0.4 * u01(rng));
    g.ratio = cfg.cdr_min + (cfg.cdr_max - cfg.cdr_min) * u01(rng);
    double slack = 0.2 * (1.0 - g.ratio);
    g.cup_cr = g.cr + g.vsemi * slack * (2 * u01(rng) - 1);
    g.cup_cc = g.cc + g.hsemi * slack * (2 * u01(rng) - 1);
    return g;
}

double smoothstep(double edge0, double edge1, double x) {
    double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

ImageSample render_sample(const SynthConfig& cfg, const std::string& id, DomainTag domain,
                          uint64_t sample_seed) {
    std::mt19937_64 rng(sample_seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int s = cfg.image_size;
    SampleGeometry g = draw_geometry(cfg, rng);

    const DomainShift no_shift;
    const DomainShift& shift = domain == DomainTag::Target ? cfg.target_shift : no_shift;

    // Low-frequency background texture grid, bilinearly interpolated.
    const int grid_n = 9;
    std::vector<double> texture(grid_n * grid_n);
    for (auto& t : texture) t = 0.08 * (u01(rng) - 0.5);

    std::array<double, 3> base{0.55 + 0.06 * (u01(rng) - 0.5), 0.33 + 0.06 * (u01(rng) - 0.5),
                               0.18 + 0.06 * (u01(rng) - 0.5)};
    const std::array<double, 3> disc_gain{0.24, 0.22, 0.16};
    const std::array<double, 3> cup_gain{0.16, 0.14, 0.10};

    ImageSample sample;
    sample.id = id;
    sample.domain = domain;
    sample.original_size = {s, s};
    for (int ch = 0; ch < 3; ++ch) sample.pixels.emplace_back(s, s, 0.f);
    LabelMasks labels{MaskGrid(s, s, 0), MaskGrid(s, s, 0)};

    auto tex_at = [&](double r, double c) {
        double gr = r / (s - 1) * (grid_n - 1), gc = c / (s - 1) * (grid_n - 1);
        int r0 = std::min(static_cast<int>(gr), grid_n - 2);
        int c0 = std::min(static_cast<int>(gc), grid_n - 2);
        double fr = gr - r0, fc = gc - c0;
        double a = texture[r0 * grid_n + c0], b = texture[r0 * grid_n + c0 + 1];
        double d = texture[(r0 + 1) * grid_n + c0], e = texture[(r0 + 1) * grid_n + c0 + 1];
        return (a * (1 - fc) + b * fc) * (1 - fr) + (d * (1 - fc) + e * fc) * fr;
    };

    std::normal_distribution<double> noise(0.0, 0.015 + shift.noise_amp);
    for (int r = 0; r < s; ++r) {
        for (int c = 0; c < s; ++c) {
            double de = std::pow((r - g.cr) / g.vsemi, 2) + std::pow((c - g.cc) / g.hsemi, 2);
            double ce = std::pow((r - g.cup_cr) / (g.ratio * g.vsemi), 2) +
                        std::pow((c - g.cup_cc) / (g.ratio * g.hsemi), 2);
            if (de <= 1.0) labels.disc(r, c) = 1;
            if (ce <= 1.0 && de <= 1.0) labels.cup(r, c) = 1;
            double disc_soft = 1.0 - smoothstep(0.92, 1.05, de);
            double cup_soft = 1.0 - smoothstep(0.92, 1.05, ce);
            double tex = tex_at(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                double v = base[ch] + tex + disc_soft * disc_gain[ch] + cup_soft * cup_gain[ch];
                v += noise(rng);
                sample.pixels[ch](r, c) = static_cast<float>(v);
            }
        }
    }

    // Vessel-like dark strokes: random walks from the disc rim outward.
    int strokes = static_cast<int>(std::lround(6 * shift.clutter_density));
    for (int k = 0; k < strokes; ++k) {
        double ang = 2 * M_PI * u01(rng);
        double r = g.cr + 0.8 * g.vsemi * std::sin(ang);
        double c = g.cc + 0.8 * g.hsemi * std::cos(ang);
        double dir = ang + 0.5 * (u01(rng) - 0.5);
        int len = s / 2 + static_cast<int>(u01(rng) * s / 2);
        for (int t = 0; t < len; ++t) {
            dir += 0.35 * (u01(rng) - 0.5);
            r += std::sin(dir);
            c += std::cos(dir);
            int ir = static_cast<int>(std::lround(r)), ic = static_cast<int>(std::lround(c));
            if (ir < 0 || ir >= s || ic < 0 || ic >= s) break;
            for (int ch = 0; ch < 3; ++ch) sample.pixels[ch](ir, ic) *= 0.55f;
        }
    }

    // Target-domain appearance shift, then clamp to [0,1].
    for (int ch = 0; ch < 3; ++ch) {
        for (int r = 0; r < s; ++r) {
            for (int c = 0; c < s; ++c) {
                double v = shift.color_gain[ch] * sample.pixels[ch](r, c) + shift.color_bias[ch];
                v = std::clamp(v, 0.0, 1.0);
                if (shift.gamma != 1.0) v = std::pow(v, shift.gamma);
                sample.pixels[ch](r, c) = static_cast<float>(v);
            }
        }
    }
    sample.labels = std::move(labels);
    return sample;
}

SynthRecord make_record(const SynthConfig& cfg, const std::string& id, uint64_t sample_seed) {
    std::mt19937_64 rng(sample_seed);
    SampleGeometry g = draw_geometry(cfg, rng);
    SynthRecord rec;
    rec.id = id;
    rec.center_row = g.cr;
    rec.center_col = g.cc;
    rec.disc_vsemi = g.vsemi;
    rec.disc_hsemi = g.hsemi;
    rec.cdr = g.ratio;
    rec.glaucoma = g.ratio > cfg.glaucoma_threshold;
    return rec;
}

uint64_t sample_seed_for(uint64_t base, DomainTag domain, int index) {
    uint64_t h = base * 1000003ull + static_cast<uint64_t>(index) * 2ull +
                 (domain == DomainTag::Target ? 1ull : 0ull);
    // splitmix64 scramble so consecutive seeds decorrelate
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

}  // namespace

SynthResult generate_synthetic(const SynthConfig& cfg, int n_source, int n_target) {
    if (n_source < 1 || n_target < 1)
        throw ConfigError("generate_synthetic: need at least one sample per domain");
    if (!(cfg.cdr_min > 0 && cfg.cdr_max < 1 && cfg.cdr_min <= cfg.cdr_max))
        throw ConfigError("generate_synthetic: cdr range must lie in (0,1)");
    SynthResult out;
    char buf[32];
    for (int i = 0; i < n_source; ++i) {
        std::snprintf(buf, sizeof(buf), "s%04d", i);
        uint64_t seed = sample_seed_for(cfg.seed, DomainTag::Source, i);
        out.source.push_back(render_sample(cfg, buf, DomainTag::Source, seed));
        out.source_truth.push_back(make_record(cfg, buf, seed));
    }
    for (int i = 0; i < n_target; ++i) {
        std::snprintf(buf, sizeof(buf), "t%04d", i);
        uint64_t seed = sample_seed_for(cfg.seed, DomainTag::Target, i);
        out.target.push_back(render_sample(cfg, buf, DomainTag::Target, seed));
        out.target_truth.push_back(make_record(cfg, buf, seed));
    }
    return out;
}

void save_registry(const std::string& path, const std::vector<SynthRecord>& records) {
    std::ofstream os(path);
    if (!os) throw DataError("save_registry: cannot write " + path);
    os << std::setprecision(17);
    os << "id,center_row,center_col,disc_vsemi,disc_hsemi,cdr,glaucoma\n";
    for (const auto& r : records)
        os << r.id << "," << r.center_row << "," << r.center_col << "," << r.disc_vsemi << ","
           << r.disc_hsemi << "," << r.cdr << "," << (r.glaucoma ? 1 : 0) << "\n";
}

std::vector<SynthRecord> load_registry(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_registry: cannot open " + path);
    std::string line;
    std::getline(is, line);  // header
    std::vector<SynthRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        SynthRecord r;
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, r.id, ',');
        auto next = [&]() {
            std::getline(ss, field, ',');
            return std::stod(field);
        };
        r.center_row = next();
        r.center_col = next();
        r.disc_vsemi = next();
        r.disc_hsemi = next();
        r.cdr = next();
        r.glaucoma = next() != 0;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace posal::data
