#include "homedqn/render.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace homedqn {

namespace {

constexpr std::uint8_t kFloor = 0;
constexpr std::uint8_t kWall = 255;
constexpr std::uint8_t kInk = 255;

std::uint8_t level(double fraction) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(fraction, 0.0, 1.0) * 255.0));
}

std::string glyph_id(Verb verb) { return "verb_" + std::string(to_string(verb)); }
std::string glyph_id(Object object) { return "object_" + std::string(to_string(object)); }

struct PgmHeader {
  int width = 0;
  int height = 0;
  std::size_t payload = 0;
};

PgmHeader parse_pgm_header(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](std::string_view what) {
    skip_space();
    const auto start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw Error("PGM: missing " + std::string(what));
    return static_cast<int>(parse_int(bytes.substr(start, pos - start), what));
  };
  if (bytes.substr(0, 2) != "P5") throw Error("PGM: not a binary graymap (P5)");
  pos = 2;
  PgmHeader h;
  h.width = read_int("width");
  h.height = read_int("height");
  const int maxval = read_int("maxval");
  if (maxval != 255) throw Error("PGM: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error("PGM: malformed header");
  }
  h.payload = pos + 1;
  const auto need = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
  if (h.width <= 0 || h.height <= 0 || bytes.size() - h.payload != need) {
    throw Error("PGM: payload size does not match header");
  }
  return h;
}

}  // namespace

RenderProfile RenderProfile::full() { return {"full", 256, 6, 12}; }
RenderProfile RenderProfile::desk() { return {"desk", 64, 3, 6}; }

RenderProfile RenderProfile::by_name(std::string_view name) {
  if (name == "full") return full();
  if (name == "desk") return desk();
  throw Error("unknown render profile '" + std::string(name) + "'");
}

SensorMask SensorMask::parse(std::string_view text) {
  SensorMask mask;
  text = trim(text);
  if (text.empty()) return mask;
  for (auto id : split(text, ',')) {
    id = trim(id);
    if (!id.empty()) mask.hidden.emplace(id);
  }
  return mask;
}

std::string SensorMask::to_string() const {
  std::string out;
  for (const auto& id : hidden) {
    if (!out.empty()) out += ',';
    out += id;
  }
  return out;
}

SensorMask presence_mask(const SensorManifest& manifest, std::optional<Room> room) {
  SensorMask mask;
  for (const auto& s : manifest.sensors()) {
    if (s.is_presence() && (!room || s.room == *room)) mask.hidden.insert(s.id);
  }
  return mask;
}

double Bitmap::fill() const {
  if (bits.empty()) return 0;
  return static_cast<double>(std::count(bits.begin(), bits.end(), 1)) /
         static_cast<double>(bits.size());
}

Bitmap resample(const Bitmap& source, int side) {
  if (side == source.side) return source;
  Bitmap out{side, std::vector<std::uint8_t>(static_cast<std::size_t>(side) * side, 0)};
  if (side * 2 == source.side) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const int n = source.at(2 * x, 2 * y) + source.at(2 * x + 1, 2 * y) +
                      source.at(2 * x, 2 * y + 1) + source.at(2 * x + 1, 2 * y + 1);
        out.bits[static_cast<std::size_t>(y) * side + x] = n >= 2 ? 1 : 0;
      }
    }
  } else if (side % source.side == 0) {
    const int k = side / source.side;
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        out.bits[static_cast<std::size_t>(y) * side + x] = source.at(x / k, y / k) ? 1 : 0;
      }
    }
  } else {
    throw Error("glyph resample from " + std::to_string(source.side) + " to " +
                std::to_string(side) + " is not supported");
  }
  return out;
}

GlyphSheet GlyphSheet::parse(std::string_view pgm_bytes, std::string_view index_text) {
  const auto header = parse_pgm_header(pgm_bytes);
  const int side = header.width;
  const auto* pixels = reinterpret_cast<const std::uint8_t*>(pgm_bytes.data() + header.payload);
  GlyphSheet sheet;
  int line_no = 0;
  for (auto line : split(index_text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, ';');
    if (fields.size() != 2) {
      throw Error("glyph index line " + std::to_string(line_no) + ": expected glyph_id;offset");
    }
    const auto offset = parse_int(fields[1], "glyph offset");
    if (offset < 0 || offset + side > header.height) {
      throw Error("glyph index line " + std::to_string(line_no) + ": offset outside sheet");
    }
    Bitmap bm{side, std::vector<std::uint8_t>(static_cast<std::size_t>(side) * side)};
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        bm.bits[static_cast<std::size_t>(y) * side + x] =
            pixels[static_cast<std::size_t>(offset + y) * side + x] > 127 ? 1 : 0;
      }
    }
    sheet.glyphs_.insert_or_assign(std::string(trim(fields[0])), std::move(bm));
  }
  return sheet;
}

GlyphSheet GlyphSheet::load(const std::filesystem::path& pgm, const std::filesystem::path& index) {
  return parse(read_file(pgm), read_file(index));
}

const Bitmap& GlyphSheet::get(std::string_view id) const {
  auto it = glyphs_.find(id);
  if (it == glyphs_.end()) throw Error("glyph sheet has no glyph '" + std::string(id) + "'");
  return it->second;
}

std::vector<WallSegment> parse_walls(std::string_view text) {
  std::vector<WallSegment> out;
  int line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line, ';');
    if (f.size() != 4) throw Error("wall line " + std::to_string(line_no) + ": expected x0;y0;x1;y1");
    WallSegment w{static_cast<int>(parse_int(f[0], "x0")), static_cast<int>(parse_int(f[1], "y0")),
                  static_cast<int>(parse_int(f[2], "x1")), static_cast<int>(parse_int(f[3], "y1"))};
    if (w.x0 != w.x1 && w.y0 != w.y1) {
      throw Error("wall line " + std::to_string(line_no) + ": only axis-aligned walls are supported");
    }
    out.push_back(w);
  }
  return out;
}

std::vector<WallSegment> load_walls(const std::filesystem::path& path) {
  return parse_walls(read_file(path));
}

Renderer::Renderer(RenderProfile profile, SensorManifest manifest, std::vector<WallSegment> walls,
                   const GlyphSheet& glyphs)
    : profile_(std::move(profile)), manifest_(std::move(manifest)), base_(profile_.image_side, kFloor) {
  if (profile_.glyph_side != 2 * profile_.cell) {
    throw Error("render profile " + profile_.name + ": glyph side must be twice the cell size");
  }
  const int side = profile_.image_side;
  const int cell = profile_.cell;
  const int margin = profile_.margin();
  const int thickness = std::max(1, cell / 3);

  for (const auto& w : walls) {
    const int x0 = margin + std::min(w.x0, w.x1) * cell;
    const int x1 = margin + std::max(w.x0, w.x1) * cell + thickness - 1;
    const int y0 = margin + std::min(w.y0, w.y1) * cell;
    const int y1 = margin + std::max(w.y0, w.y1) * cell + thickness - 1;
    for (int y = std::max(0, y0); y <= std::min(side - 1, y1); ++y) {
      for (int x = std::max(0, x0); x <= std::min(side - 1, x1); ++x) base_.at(x, y) = kWall;
    }
  }

  const int g = profile_.glyph_side;
  command_box_ = {margin + cell, margin + (profile_.grid_cells() - 4) * cell, 4 * g, 2 * g};

  auto clear_of_walls = [&](const PixelRect& r) {
    for (int y = r.y; y < r.y + r.h; ++y) {
      for (int x = r.x; x < r.x + r.w; ++x) {
        if (base_.at(x, y) != kFloor) return false;
      }
    }
    return true;
  };
  auto inside = [&](const PixelRect& r) {
    return r.x >= 0 && r.y >= 0 && r.x + r.w <= side && r.y + r.h <= side;
  };
  if (!inside(command_box_) || !clear_of_walls(command_box_)) {
    throw Error("render profile " + profile_.name + ": command area overlaps the floor plan");
  }

  boxes_.reserve(manifest_.size());
  for (const auto& s : manifest_.sensors()) {
    PixelRect r{margin + s.slot.x * cell, margin + s.slot.y * cell, g, g};
    const auto where = "sensor " + s.id + " icon slot (" + std::to_string(s.slot.x) + "," +
                       std::to_string(s.slot.y) + ")";
    if (!inside(r)) throw Error(where + " lies outside the " + profile_.name + " image");
    if (!clear_of_walls(r)) throw Error(where + " overlaps a wall");
    if (r.intersects(command_box_)) throw Error(where + " overlaps the command area");
    for (std::size_t j = 0; j < boxes_.size(); ++j) {
      if (r.intersects(boxes_[j])) {
        throw Error(where + " overlaps sensor " + manifest_.sensors()[j].id);
      }
    }
    boxes_.push_back(r);
  }

  kind_glyphs_[static_cast<int>(SensorKind::binary)] = resample(glyphs.get("binary"), g);
  kind_glyphs_[static_cast<int>(SensorKind::continuous)] = resample(glyphs.get("continuous"), g);
  kind_glyphs_[static_cast<int>(SensorKind::gauge)] = resample(glyphs.get("gauge"), g);
  for (Verb v : kVerbs) verb_glyphs_[v] = resample(glyphs.get(glyph_id(v)), 2 * g);
  for (Object o : kObjects) object_glyphs_[o] = resample(glyphs.get(glyph_id(o)), 2 * g);
}

Renderer Renderer::reference(std::string_view profile_name, const std::filesystem::path& data_dir) {
  const auto name = std::string(profile_name);
  return Renderer(RenderProfile::by_name(name),
                  SensorManifest::load(data_dir / ("sensors_" + name + ".txt")),
                  load_walls(data_dir / ("walls_" + name + ".txt")),
                  GlyphSheet::load(data_dir / "glyphs.pgm", data_dir / "glyphs.txt"));
}

void Renderer::draw_sensor(StateImage& img, std::size_t index, double value) const {
  const auto& spec = manifest_.sensors()[index];
  const auto& box = boxes_[index];
  const auto& glyph = kind_glyphs_[static_cast<int>(spec.kind)];
  const int g = glyph.side;
  switch (spec.kind) {
    case SensorKind::binary: {
      // Active: dark figure on a lit field. Inactive: the inverse.
      const bool on = value >= 0.5;
      for (int y = 0; y < g; ++y) {
        for (int x = 0; x < g; ++x) {
          img.at(box.x + x, box.y + y) = (glyph.at(x, y) != on) ? kInk : 0;
        }
      }
      break;
    }
    case SensorKind::continuous: {
      const auto fill = level(spec.normalized(value));
      for (int y = 0; y < g; ++y) {
        for (int x = 0; x < g; ++x) img.at(box.x + x, box.y + y) = glyph.at(x, y) ? kInk : fill;
      }
      break;
    }
    case SensorKind::gauge: {
      // Bar rising from the bottom of the frame; the top partial row is shaded.
      const int rows = g - 2;
      const double height = spec.normalized(value) * rows;
      for (int y = 0; y < g; ++y) {
        const int from_bottom = (g - 2) - y;
        const auto shade = level(height - from_bottom);
        for (int x = 0; x < g; ++x) {
          img.at(box.x + x, box.y + y) = glyph.at(x, y) ? kInk : shade;
        }
      }
      break;
    }
  }
}

void Renderer::draw_command(StateImage& img, const VoiceCommand& command) const {
  auto blit = [&](const Bitmap& bm, int ox) {
    for (int y = 0; y < bm.side; ++y) {
      for (int x = 0; x < bm.side; ++x) {
        img.at(ox + x, command_box_.y + y) = bm.at(x, y) ? kInk : 0;
      }
    }
  };
  if (command.verb != Verb::none) blit(verb_glyphs_.at(command.verb), command_box_.x);
  if (command.object != Object::none) {
    blit(object_glyphs_.at(command.object), command_box_.x + 2 * profile_.glyph_side);
  }
}

StateImage Renderer::render(const EnvState& state, const SensorMask& mask) const {
  StateImage img = base_;
  const auto& sensors = manifest_.sensors();
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    if (!mask.empty() && mask.hides(sensors[i].id)) continue;
    auto it = state.readings.find(sensors[i].id);
    if (it == state.readings.end()) {
      throw Error("render: no reading for sensor " + sensors[i].id);
    }
    draw_sensor(img, i, it->second);
  }
  if (!state.command.empty() && !mask.hides(SensorMask::kCommand)) draw_command(img, state.command);
  return img;
}

EnvState apply_mask(const EnvState& state, const SensorMask& mask) {
  EnvState out = state;
  for (const auto& id : mask.hidden) {
    if (id == SensorMask::kCommand) {
      out.command = {};
    } else if (out.readings.erase(id) == 0) {
      spdlog::warn("sensor mask: ignoring unknown sensor id '{}'", id);
    }
  }
  return out;
}

std::string export_pgm(const StateImage& image) {
  std::string out = "P5\n" + std::to_string(image.side) + " " + std::to_string(image.side) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

StateImage parse_pgm(std::string_view bytes) {
  const auto header = parse_pgm_header(bytes);
  if (header.width != header.height) throw Error("PGM: state images are square");
  StateImage img(header.width);
  std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data() + header.payload),
              img.pixels.size(), img.pixels.begin());
  return img;
}

}  // namespace homedqn
