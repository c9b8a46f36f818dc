#include "light4gs/io/sections.hpp"

namespace l4gs::io {

std::size_t sectioned_header_size(std::size_t magic_len, std::size_t header_len, std::size_t count) {
  return magic_len + 2 + 2 + header_len + count * kTableEntrySize + 4;
}

Bytes pack_sections(const std::string& magic, const SectionedFile& file) {
  ByteWriter w;
  w.raw(magic.data(), magic.size());
  w.u16(file.version);
  w.u16(static_cast<std::uint16_t>(file.sections.size()));
  w.raw(file.header);
  std::uint64_t offset = sectioned_header_size(magic.size(), file.header.size(), file.sections.size());
  for (const auto& s : file.sections) {
    w.u32(s.id);
    w.u64(offset);
    w.u64(s.payload.size());
    w.u32(crc32(s.payload));
    offset += s.payload.size();
  }
  w.u32(crc32(w.bytes()));
  for (const auto& s : file.sections) w.raw(s.payload);
  return w.take();
}

SectionedFile unpack_sections(const Bytes& bytes, const std::string& magic, std::uint16_t version,
                              std::size_t header_len, const std::vector<std::uint32_t>& expected_ids,
                              const std::function<std::string(std::uint32_t)>& section_name) {
  ByteReader r(bytes, "header");
  if (bytes.size() < magic.size() || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0)
    throw FormatError("header: bad magic");
  r.raw(magic.size());
  SectionedFile file;
  file.version = r.u16();
  if (file.version != version)
    throw FormatError("header: unsupported version " + std::to_string(file.version) + " (expected " +
                      std::to_string(version) + ")");
  const std::size_t count = r.u16();
  if (count != expected_ids.size())
    throw FormatError("header: " + std::to_string(count) + " sections, expected " +
                      std::to_string(expected_ids.size()));
  const auto* hdr = r.raw(header_len);
  file.header.assign(hdr, hdr + header_len);

  struct Entry {
    std::uint32_t id;
    std::uint64_t offset, size;
    std::uint32_t crc;
  };
  std::vector<Entry> table(count);
  for (auto& e : table) e = Entry{r.u32(), r.u64(), r.u64(), r.u32()};
  const std::size_t table_end = r.pos();
  const std::uint32_t stored = r.u32();
  if (crc32(bytes.data(), table_end) != stored) throw FormatError("header: checksum mismatch");

  std::uint64_t expect_offset = r.pos();
  for (std::size_t i = 0; i < count; ++i) {
    const auto& e = table[i];
    const std::string name = section_name(expected_ids[i]);
    if (e.id != expected_ids[i]) throw FormatError(name + ": unexpected section id " + std::to_string(e.id));
    if (e.offset != expect_offset) throw FormatError(name + ": section offset out of order");
    if (e.offset > bytes.size() || e.size > bytes.size() - e.offset)
      throw FormatError(name + ": section truncated (declared " + std::to_string(e.size) + " bytes at offset " +
                        std::to_string(e.offset) + ", file has " + std::to_string(bytes.size()) + ")");
    const auto* p = bytes.data() + e.offset;
    if (crc32(p, e.size) != e.crc) throw FormatError(name + ": checksum mismatch");
    file.sections.push_back(Section{e.id, Bytes(p, p + e.size)});
    expect_offset = e.offset + e.size;
  }
  if (expect_offset != bytes.size())
    throw FormatError("trailer: " + std::to_string(bytes.size() - expect_offset) + " unexpected trailing bytes");
  return file;
}

}  // namespace l4gs::io
