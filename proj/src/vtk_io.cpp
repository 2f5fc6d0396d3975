#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "psbfem/error.hpp"
#include "psbfem/inp_io.hpp"

namespace psbfem {

namespace {

constexpr int vtk_polygon = 7;

void put(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

void write_file(const std::filesystem::path& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) throw IoError("write failed for " + path.string());
}

std::string attribute(std::string_view tag, std::string_view name) {
    const std::string key = std::string(name) + "=\"";
    const auto p = tag.find(key);
    if (p == std::string_view::npos) return {};
    const auto q = tag.find('"', p + key.size());
    if (q == std::string_view::npos) return {};
    return std::string(tag.substr(p + key.size(), q - p - key.size()));
}

template <class T>
std::vector<T> numbers(std::string_view body, const std::string& what) {
    std::vector<T> out;
    std::size_t i = 0;
    while (i < body.size()) {
        while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
        if (i == body.size()) break;
        std::size_t j = i;
        while (j < body.size() && !std::isspace(static_cast<unsigned char>(body[j]))) ++j;
        T v{};
        const auto r = std::from_chars(body.data() + i, body.data() + j, v);
        if (r.ec != std::errc() || r.ptr != body.data() + j) throw IoError("malformed number in " + what);
        out.push_back(v);
        i = j;
    }
    return out;
}

}  // namespace

std::string vtu_string(const Mesh& mesh, const Eigen::VectorXd& field, const std::string& name) {
    if (field.size() != static_cast<Eigen::Index>(mesh.nodes.size()))
        throw ConfigError("vtu: field length " + std::to_string(field.size()) + " does not match " +
                          std::to_string(mesh.nodes.size()) + " nodes");
    std::string out;
    out.reserve(64 * mesh.nodes.size() + 32 * mesh.cells.size() + 1024);
    out += "<?xml version=\"1.0\"?>\n";
    out += "<VTKFile type=\"UnstructuredGrid\" version=\"1.0\" byte_order=\"LittleEndian\" header_type=\"UInt64\">\n";
    out += "  <UnstructuredGrid>\n";
    out += "    <Piece NumberOfPoints=\"" + std::to_string(mesh.nodes.size()) + "\" NumberOfCells=\"" +
           std::to_string(mesh.cells.size()) + "\">\n";
    out += "      <PointData Scalars=\"" + name + "\">\n";
    out += "        <DataArray type=\"Float64\" Name=\"" + name + "\" format=\"ascii\">\n";
    for (Eigen::Index i = 0; i < field.size(); ++i) {
        out += "          ";
        put(out, field[i]);
        out += '\n';
    }
    out += "        </DataArray>\n      </PointData>\n";
    out += "      <Points>\n        <DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n";
    for (const auto& n : mesh.nodes) {
        out += "          ";
        put(out, n.position.x);
        out += ' ';
        put(out, n.position.y);
        out += " 0\n";
    }
    out += "        </DataArray>\n      </Points>\n      <Cells>\n";
    out += "        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n";
    for (const auto& c : mesh.cells) {
        out += "         ";
        for (Index v : c.vertex_ids) out += ' ' + std::to_string(v);
        out += '\n';
    }
    out += "        </DataArray>\n        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n";
    std::size_t offset = 0;
    for (const auto& c : mesh.cells) {
        offset += c.vertex_ids.size();
        out += "          " + std::to_string(offset) + '\n';
    }
    out += "        </DataArray>\n        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n";
    for (std::size_t i = 0; i < mesh.cells.size(); ++i) out += "          " + std::to_string(vtk_polygon) + '\n';
    out += "        </DataArray>\n      </Cells>\n    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n";
    return out;
}

void write_vtu(const Mesh& mesh, const Eigen::VectorXd& field, const std::filesystem::path& path,
               const std::string& name) {
    write_file(path, vtu_string(mesh, field, name));
}

VtuData read_vtu(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    VtuData d;
    enum class Section { None, PointData, Points, Cells } section = Section::None;
    std::size_t pos = 0;
    while ((pos = text.find('<', pos)) != std::string::npos) {
        const std::size_t end = text.find('>', pos);
        if (end == std::string::npos) throw IoError("truncated tag in " + path.string());
        const std::string_view tag(text.data() + pos, end - pos + 1);
        pos = end + 1;
        if (tag.starts_with("<PointData")) section = Section::PointData;
        else if (tag.starts_with("<Points")) section = Section::Points;
        else if (tag.starts_with("<Cells")) section = Section::Cells;
        else if (tag.starts_with("</PointData") || tag.starts_with("</Points") || tag.starts_with("</Cells"))
            section = Section::None;
        else if (tag.starts_with("<DataArray")) {
            if (attribute(tag, "format") != "ascii") throw IoError("only ascii DataArrays are supported");
            const std::size_t close = text.find("</DataArray>", pos);
            if (close == std::string::npos) throw IoError("unterminated DataArray in " + path.string());
            const std::string_view body(text.data() + pos, close - pos);
            const std::string name = attribute(tag, "Name");
            pos = close;
            switch (section) {
                case Section::PointData: d.point_data[name] = numbers<double>(body, name); break;
                case Section::Points: {
                    const auto xyz = numbers<double>(body, "Points");
                    if (xyz.size() % 3) throw IoError("Points array length is not a multiple of 3");
                    for (std::size_t i = 0; i < xyz.size(); i += 3) d.points.push_back({xyz[i], xyz[i + 1]});
                    break;
                }
                case Section::Cells:
                    if (name == "connectivity") d.connectivity = numbers<long long>(body, name);
                    else if (name == "offsets") d.offsets = numbers<long long>(body, name);
                    else if (name == "types") d.types = numbers<int>(body, name);
                    break;
                case Section::None: break;
            }
        }
    }
    return d;
}

ProbeSampler::ProbeSampler(const Mesh& mesh, std::span<const ElementMatrices> elements,
                           std::span<const Point2D> points)
    : mesh_(&mesh), elements_(elements) {
    if (points.empty()) return;
    double scale = 0.0;
    for (const auto& n : mesh.nodes) scale = std::max({scale, std::abs(n.position.x), std::abs(n.position.y)});
    const double tol = 1e-12 * std::max(scale, 1.0);
    const PointLocator locator(mesh, elements);
    for (const Point2D p : points) {
        Target t;
        for (const auto& n : mesh.nodes)
            if (std::abs(n.position.x - p.x) <= tol && std::abs(n.position.y - p.y) <= tol) {
                t.node = n.id;
                break;
            }
        if (!t.node) {
            const auto loc = locator.locate(p);
            if (!loc) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "probe (%g, %g) lies outside the mesh", p.x, p.y);
                throw ConfigError(buf);
            }
            t.where = *loc;
        }
        targets_.push_back(t);
    }
}

std::vector<double> ProbeSampler::sample(const Eigen::VectorXd& T) const {
    std::vector<double> out;
    out.reserve(targets_.size());
    for (const auto& t : targets_) {
        if (t.node) {
            out.push_back(T[static_cast<Eigen::Index>(*t.node)]);
            continue;
        }
        const auto& e = elements_[t.where.cell];
        Eigen::VectorXd local(static_cast<Eigen::Index>(e.node_ids.size()));
        for (std::size_t k = 0; k < e.node_ids.size(); ++k)
            local[static_cast<Eigen::Index>(k)] = T[static_cast<Eigen::Index>(e.node_ids[k])];
        out.push_back(InteriorField(e.modes, local)(t.where.xi, t.where.eta, t.where.edge));
    }
    return out;
}

TimeSeriesFiles write_time_series(const CaseResult& result, const std::filesystem::path& directory,
                                  std::span<const Point2D> probes, const std::string& prefix) {
    if (result.states.empty()) throw ConfigError("time series: no output states");
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec || !std::filesystem::is_directory(directory))
        throw IoError("cannot create directory " + directory.string());

    TimeSeriesFiles files;
    std::string pvd = "<?xml version=\"1.0\"?>\n"
                      "<VTKFile type=\"Collection\" version=\"1.0\" byte_order=\"LittleEndian\">\n"
                      "  <Collection>\n";
    for (std::size_t k = 0; k < result.states.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%06zu.vtu", prefix.c_str(), k);
        const auto path = directory / name;
        write_vtu(result.mesh, result.states[k].T, path);
        files.vtu.push_back(path);
        pvd += "    <DataSet timestep=\"";
        put(pvd, result.states[k].t);
        pvd += std::string("\" group=\"\" part=\"0\" file=\"") + name + "\"/>\n";
    }
    pvd += "  </Collection>\n</VTKFile>\n";
    files.pvd = directory / (prefix + ".pvd");
    write_file(files.pvd, pvd);

    if (!probes.empty()) {
        const ProbeSampler sampler(result.mesh, result.elements, probes);
        std::string csv = "time";
        for (const Point2D p : probes) {
            char buf[96];
            std::snprintf(buf, sizeof buf, ",\"T(%.10g,%.10g)\"", p.x, p.y);
            csv += buf;
        }
        csv += "\r\n";
        for (const auto& s : result.states) {
            put(csv, s.t);
            for (double v : sampler.sample(s.T)) {
                csv += ',';
                put(csv, v);
            }
            csv += "\r\n";
        }
        files.probes_csv = directory / (prefix + "_probes.csv");
        write_file(*files.probes_csv, csv);
    }
    return files;
}

}  // namespace psbfem
