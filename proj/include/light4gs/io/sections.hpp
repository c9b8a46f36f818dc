#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "light4gs/io/bytes.hpp"

namespace l4gs::io {

// Layout shared by scene files and containers:
//   magic | u16 version | u16 section count | fixed header payload |
//   count x {u32 id, u64 offset, u64 size, u32 crc32} | u32 crc32 of everything before |
//   section payloads, contiguous and in table order.
struct Section {
  std::uint32_t id = 0;
  Bytes payload;
};

struct SectionedFile {
  std::uint16_t version = 0;
  Bytes header;  // fixed-size payload after the section count
  std::vector<Section> sections;
};

inline constexpr std::size_t kTableEntrySize = 4 + 8 + 8 + 4;

std::size_t sectioned_header_size(std::size_t magic_len, std::size_t header_len, std::size_t count);

Bytes pack_sections(const std::string& magic, const SectionedFile& file);

/// Validates magic, version, table, header CRC and every section CRC.
/// `section_name(id)` labels errors. The section ids must equal `expected_ids` in order.
SectionedFile unpack_sections(const Bytes& bytes, const std::string& magic, std::uint16_t version,
                              std::size_t header_len, const std::vector<std::uint32_t>& expected_ids,
                              const std::function<std::string(std::uint32_t)>& section_name);

}  // namespace l4gs::io
