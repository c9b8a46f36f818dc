#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "light4gs/io/bytes.hpp"

namespace l4gs::codec {

inline constexpr char kContainerMagic[] = "L4GS-BIT";  // 8 bytes on disk, no terminator
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::size_t kContainerSections = 5;

enum ContainerSection : std::uint32_t {
  kPrimitivesSection = 1,
  kDeformationSection = 2,
  kHexplaneSection = 3,
  kShSection = 4,
  kMhcmSection = 5,
};

/// "primitives", "deformation", "hexplane", "sh", "mhcm".
std::string container_section_name(std::uint32_t id);

/// Payloads in fixed order: primitives, deformation, hexplane, SH, MHCM.
using ContainerSections = std::array<io::Bytes, kContainerSections>;

io::Bytes pack_container(const ContainerSections& sections);
/// Verifies magic, version, table and every CRC; errors name the section.
ContainerSections unpack_container(const io::Bytes& bytes);

/// Bytes before the first payload.
std::size_t container_header_size();

struct SectionStat {
  std::string name;
  std::size_t bytes = 0;
  double percent = 0.0;  // share of all section payloads
};

struct ContainerStats {
  std::size_t header_bytes = 0;
  std::size_t file_bytes = 0;
  std::vector<SectionStat> sections;
};

/// Percentages of each entry in the sum; all zero when the sum is zero.
std::vector<double> section_percentages(const std::vector<std::size_t>& sizes);
ContainerStats container_stats(const io::Bytes& bytes);
std::string stats_table(const ContainerStats& s);
/// CSV with header "section,bytes,percent"; the header row is listed as "header".
std::string stats_csv(const ContainerStats& s);

}  // namespace l4gs::codec
