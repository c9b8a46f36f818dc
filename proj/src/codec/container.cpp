#include "light4gs/codec/container.hpp"

#include <cstdio>
#include <sstream>

#include "light4gs/io/sections.hpp"

namespace l4gs::codec {

namespace {
const std::string kMagic(kContainerMagic, sizeof(kContainerMagic) - 1);
const std::vector<std::uint32_t> kIds{kPrimitivesSection, kDeformationSection, kHexplaneSection, kShSection,
                                      kMhcmSection};
}  // namespace

std::string container_section_name(std::uint32_t id) {
  switch (id) {
    case kPrimitivesSection: return "primitives";
    case kDeformationSection: return "deformation";
    case kHexplaneSection: return "hexplane";
    case kShSection: return "sh";
    case kMhcmSection: return "mhcm";
    default: return "section " + std::to_string(id);
  }
}

io::Bytes pack_container(const ContainerSections& sections) {
  io::SectionedFile f;
  f.version = kContainerVersion;
  for (std::size_t i = 0; i < kContainerSections; ++i) f.sections.push_back({kIds[i], sections[i]});
  return io::pack_sections(kMagic, f);
}

ContainerSections unpack_container(const io::Bytes& bytes) {
  auto f = io::unpack_sections(bytes, kMagic, kContainerVersion, 0, kIds, container_section_name);
  ContainerSections out;
  for (std::size_t i = 0; i < kContainerSections; ++i) out[i] = std::move(f.sections[i].payload);
  return out;
}

std::size_t container_header_size() { return io::sectioned_header_size(kMagic.size(), 0, kContainerSections); }

std::vector<double> section_percentages(const std::vector<std::size_t>& sizes) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  std::vector<double> out(sizes.size(), 0.0);
  if (total == 0) return out;
  for (std::size_t i = 0; i < sizes.size(); ++i) out[i] = 100.0 * static_cast<double>(sizes[i]) / static_cast<double>(total);
  return out;
}

ContainerStats container_stats(const io::Bytes& bytes) {
  const auto sections = unpack_container(bytes);
  ContainerStats st;
  st.file_bytes = bytes.size();
  st.header_bytes = container_header_size();
  std::vector<std::size_t> sizes;
  for (const auto& s : sections) sizes.push_back(s.size());
  const auto pct = section_percentages(sizes);
  for (std::size_t i = 0; i < kContainerSections; ++i)
    st.sections.push_back({container_section_name(kIds[i]), sizes[i], pct[i]});
  return st;
}

std::string stats_table(const ContainerStats& s) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %10s %8s\n", "section", "bytes", "share");
  os << line;
  for (const auto& sec : s.sections) {
    std::snprintf(line, sizeof line, "%-12s %10zu %7.2f%%\n", sec.name.c_str(), sec.bytes, sec.percent);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-12s %10zu\n%-12s %10zu\n", "header", s.header_bytes, "file", s.file_bytes);
  os << line;
  return os.str();
}

std::string stats_csv(const ContainerStats& s) {
  std::ostringstream os;
  os << "section,bytes,percent\n";
  char pct[32];
  for (const auto& sec : s.sections) {
    std::snprintf(pct, sizeof pct, "%.4f", sec.percent);
    os << sec.name << ',' << sec.bytes << ',' << pct << '\n';
  }
  os << "header," << s.header_bytes << ",\n";
  return os.str();
}

}  // namespace l4gs::codec
