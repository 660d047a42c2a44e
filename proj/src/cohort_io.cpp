#include "murrenet/cohort_io.hpp"

#include <bit>
#include <cinttypes>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "feature files are little-endian");

namespace murre {

namespace fs = std::filesystem;

void write_feature_file(const fs::path& path, const Mat& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    const int32_t hdr[2] = {m.rows, m.cols};
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    std::vector<float> buf(m.size());
    for (size_t i = 0; i < m.size(); ++i) buf[i] = static_cast<float>(m.a[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw DataError("write failed: " + path.string());
}

Mat read_feature_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file: " + path.string());
    int32_t hdr[2] = {0, 0};
    in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    if (!in || hdr[0] < 1 || hdr[1] < 1)
        throw DataError("bad feature file header in " + path.string());
    const size_t n = static_cast<size_t>(hdr[0]) * static_cast<size_t>(hdr[1]);
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw DataError("truncated feature file: " + path.string());
    Mat m(hdr[0], hdr[1]);
    for (size_t i = 0; i < n; ++i) m.a[i] = static_cast<double>(buf[i]);
    return m;
}

void write_cohort(const fs::path& dir, const Cohort& cohort) {
    validate_cohort(cohort);
    fs::create_directories(dir);
    std::ostringstream manifest;
    manifest << "patient_id\tsurvival_time\tevent_observed\tpathology_file\tgenomics_file\n";
    for (const auto& p : cohort.patients) {
        const std::string pf = p.patient_id + "_path.bin";
        const std::string gf = p.patient_id + "_gen.bin";
        write_feature_file(dir / pf, p.pathology_tokens);
        write_feature_file(dir / gf, p.genomic_groups);
        char tbuf[40];
        std::snprintf(tbuf, sizeof tbuf, "%.17g", p.survival_time);
        manifest << p.patient_id << '\t' << tbuf << '\t' << (p.event_observed ? 1 : 0) << '\t' << pf << '\t' << gf
                 << '\n';
    }
    std::ofstream out(dir / "manifest.tsv", std::ios::binary);
    if (!out) throw DataError("cannot write manifest in " + dir.string());
    out << manifest.str();
}

Cohort read_cohort(const fs::path& dir) {
    const fs::path mpath = dir / "manifest.tsv";
    std::ifstream in(mpath);
    if (!in) throw DataError("missing manifest.tsv in " + dir.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest: " + mpath.string());

    Cohort cohort;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) cols.push_back(cell);
        if (cols.size() != 5)
            throw DataError("manifest line " + std::to_string(lineno) + ": expected 5 columns, got " +
                            std::to_string(cols.size()));
        PatientRecord rec;
        rec.patient_id = cols[0];
        try {
            rec.survival_time = std::stod(cols[1]);
        } catch (const std::exception&) {
            throw DataError("manifest line " + std::to_string(lineno) + ": bad survival_time '" + cols[1] + "'");
        }
        if (cols[2] != "0" && cols[2] != "1")
            throw DataError("manifest line " + std::to_string(lineno) + ": event_observed must be 0 or 1");
        rec.event_observed = cols[2] == "1";
        rec.pathology_tokens = read_feature_file(dir / cols[3]);
        rec.genomic_groups = read_feature_file(dir / cols[4]);
        cohort.patients.push_back(std::move(rec));
    }
    validate_cohort(cohort);
    return cohort;
}

namespace {
void fnv1a_file(const fs::path& path, uint64_t& h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("fingerprint: cannot open " + path.string());
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
}
}  // namespace

std::string fingerprint_cohort(const fs::path& dir) {
    uint64_t h = 0xcbf29ce484222325ULL;
    fnv1a_file(dir / "manifest.tsv", h);
    std::ifstream in(dir / "manifest.tsv");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) cols.push_back(cell);
        if (cols.size() == 5) {
            fnv1a_file(dir / cols[3], h);
            fnv1a_file(dir / cols[4], h);
        }
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

}  // namespace murre
