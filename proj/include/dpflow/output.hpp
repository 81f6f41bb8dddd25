#pragma once
// Deterministic writers: CSV series and legacy-VTK structured points, all
// numbers printed with 17 significant digits.

#include <cstddef>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace dpflow {

std::string format_number(double v);

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    void row(const std::vector<double>& values);
    // First column as text (e.g. a name), the rest numeric.
    void row(const std::string& label, const std::vector<double>& values);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::size_t columns_;
    std::ofstream out_;
};

struct VtkField {
    std::string name;
    const std::vector<double>* values;
};

// Cell data on an nx x ny grid of spacing (hx, hy); 1D grids use ny = 1.
void write_vtk_cells(const std::string& path, const std::string& title, std::size_t nx, std::size_t ny,
                     double hx, double hy, const std::vector<VtkField>& fields);

// Point data on an nx x ny node grid with spacing (hx, hy).
void write_vtk_points(const std::string& path, const std::string& title, std::size_t nx, std::size_t ny,
                      double hx, double hy, const std::vector<VtkField>& fields);

// Zero-padded snapshot file name, e.g. snapshot_name("S", 7) == "S_0007.vtk".
std::string snapshot_name(const std::string& prefix, int index);

struct RunManifest {
    std::string action;
    std::string config_path;
    std::string config_hash;
    std::string version;
    std::vector<std::string> files;
    std::vector<std::pair<std::string, double>> timings;
    std::vector<std::pair<std::string, std::string>> notes;

    void write(const std::string& path) const;
};

// CRC-32 of the bytes, as 8 hex digits.
std::string content_hash(const std::string& bytes);

} // namespace dpflow
