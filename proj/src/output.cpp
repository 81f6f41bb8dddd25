#include "dpflow/output.hpp"

#include "dpflow/error.hpp"

#include <boost/crc.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dpflow {

namespace {

void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ConfigError("cannot write '" + path + "'");
    out << content;
    if (!out)
        throw ConfigError("write failed for '" + path + "'");
}

void check_fields(const std::vector<VtkField>& fields, std::size_t count)
{
    for (const auto& f : fields)
        if (!f.values || f.values->size() != count)
            throw DomainError("VTK field '" + f.name + "' has the wrong length");
}

std::string vtk_body(const std::vector<VtkField>& fields)
{
    std::string s;
    for (const auto& f : fields) {
        s += "SCALARS " + f.name + " double 1\nLOOKUP_TABLE default\n";
        for (double v : *f.values) {
            s += format_number(v);
            s += '\n';
        }
    }
    return s;
}

} // namespace

std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : path_(path), columns_(header.size()), out_(path, std::ios::binary | std::ios::trunc)
{
    if (!out_)
        throw ConfigError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < header.size(); ++i)
        out_ << (i ? "," : "") << header[i];
    out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values)
{
    if (values.size() != columns_)
        throw DomainError("CSV row width does not match the header of " + path_);
    std::string line;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i)
            line += ',';
        line += format_number(values[i]);
    }
    line += '\n';
    out_ << line;
    out_.flush();
}

void CsvWriter::row(const std::string& label, const std::vector<double>& values)
{
    if (values.size() + 1 != columns_)
        throw DomainError("CSV row width does not match the header of " + path_);
    std::string line = label;
    for (double v : values)
        line += "," + format_number(v);
    line += '\n';
    out_ << line;
    out_.flush();
}

void write_vtk_cells(const std::string& path, const std::string& title, std::size_t nx, std::size_t ny,
                     double hx, double hy, const std::vector<VtkField>& fields)
{
    check_fields(fields, nx * ny);
    std::string s = "# vtk DataFile Version 3.0\n" + title + "\nASCII\nDATASET STRUCTURED_POINTS\n";
    s += "DIMENSIONS " + std::to_string(nx + 1) + " " + std::to_string(ny + 1) + " 1\n";
    s += "ORIGIN 0 0 0\n";
    s += "SPACING " + format_number(hx) + " " + format_number(hy) + " 1\n";
    s += "CELL_DATA " + std::to_string(nx * ny) + "\n";
    s += vtk_body(fields);
    write_file(path, s);
}

void write_vtk_points(const std::string& path, const std::string& title, std::size_t nx, std::size_t ny,
                      double hx, double hy, const std::vector<VtkField>& fields)
{
    check_fields(fields, nx * ny);
    std::string s = "# vtk DataFile Version 3.0\n" + title + "\nASCII\nDATASET STRUCTURED_POINTS\n";
    s += "DIMENSIONS " + std::to_string(nx) + " " + std::to_string(ny) + " 1\n";
    s += "ORIGIN 0 0 0\n";
    s += "SPACING " + format_number(hx) + " " + format_number(hy) + " 1\n";
    s += "POINT_DATA " + std::to_string(nx * ny) + "\n";
    s += vtk_body(fields);
    write_file(path, s);
}

std::string snapshot_name(const std::string& prefix, int index)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04d.vtk", prefix.c_str(), index);
    return buf;
}

std::string content_hash(const std::string& bytes)
{
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(crc.checksum()));
    return buf;
}

void RunManifest::write(const std::string& path) const
{
    std::ostringstream s;
    s << "action = " << action << "\n";
    s << "config = " << config_path << "\n";
    s << "config_hash = crc32:" << config_hash << "\n";
    s << "version = " << version << "\n";
    for (const auto& f : files)
        s << "file = " << f << "\n";
    for (const auto& [k, v] : notes)
        s << k << " = " << v << "\n";
    for (const auto& [k, v] : timings)
        s << "time." << k << "_s = " << format_number(v) << "\n";
    write_file(path, s.str());
}

} // namespace dpflow
