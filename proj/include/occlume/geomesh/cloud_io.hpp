#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "occlume/geomesh/types.hpp"

namespace occlume::geomesh {

// PCB1: "PCB1", u32 LE count, count * 3 f32 LE (x, y, z).
std::string encode_pcb(const PointCloud& pc);
PointCloud decode_pcb(std::string_view bytes);
void write_pcb(const std::filesystem::path& path, const PointCloud& pc);
PointCloud read_pcb(const std::filesystem::path& path);

// XYZ text: one "x y z" per line.
std::string encode_xyz(const PointCloud& pc);
PointCloud decode_xyz(std::string_view text);
void write_xyz(const std::filesystem::path& path, const PointCloud& pc);
PointCloud read_xyz(const std::filesystem::path& path);

// ASCII PLY with a single float x/y/z vertex element. Values are printed
// with 9 significant digits, which round-trips any f32.
std::string encode_ply(const PointCloud& pc);
PointCloud decode_ply(std::string_view text);
void write_ply(const std::filesystem::path& path, const PointCloud& pc);
PointCloud read_ply(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace occlume::geomesh
