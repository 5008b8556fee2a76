#pragma once

// Rasterizes an EnvState onto a fixed-size grayscale floor-plan image.
//
// Layout conventions (cell units, origin top-left):
//   * the usable grid is floor(side / cell) cells wide, centred in the image;
//   * every sensor glyph covers 2x2 cells starting at its manifest slot;
//   * the pending command is drawn double size (verb glyph, then object glyph)
//     on the bottom four rows of the grid, starting one cell from the left.
// Floor pixels are 0 and walls 255.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "homedqn/common.hpp"
#include "homedqn/home_model.hpp"

namespace homedqn {

struct RenderProfile {
  std::string name;
  int image_side = 0;
  int cell = 0;
  int glyph_side = 0;

  static RenderProfile full();
  static RenderProfile desk();
  static RenderProfile by_name(std::string_view name);

  int grid_cells() const { return image_side / cell; }
  int margin() const { return (image_side - grid_cells() * cell) / 2; }
};

struct StateImage {
  int side = 0;
  std::vector<std::uint8_t> pixels;  // row-major, side * side

  StateImage() = default;
  explicit StateImage(int side_px, std::uint8_t fill = 0)
      : side(side_px), pixels(static_cast<std::size_t>(side_px) * side_px, fill) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * side + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * side + x]; }
  bool operator==(const StateImage&) const = default;
};

struct SensorMask {
  /// Pseudo id hiding the command glyph.
  static constexpr std::string_view kCommand = "command";

  std::set<std::string, std::less<>> hidden;

  bool hides(std::string_view id) const { return hidden.find(id) != hidden.end(); }
  bool empty() const { return hidden.empty(); }
  /// Comma-separated ids; empty text gives an empty mask.
  static SensorMask parse(std::string_view text);
  std::string to_string() const;
};

/// Ids of every presence sensor of `manifest` (optionally restricted to a room).
SensorMask presence_mask(const SensorManifest& manifest, std::optional<Room> room = std::nullopt);

struct Bitmap {
  int side = 0;
  std::vector<std::uint8_t> bits;  // 0/1, row-major

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * side + x] != 0; }
  double fill() const;
};

/// Resamples a bitmap: halving keeps a pixel when at least two of its four
/// sources are set; doubling replicates.
Bitmap resample(const Bitmap& source, int side);

class GlyphSheet {
 public:
  GlyphSheet() = default;
  /// `index` lines are `glyph_id;offset`, the offset being the pixel row of a
  /// square glyph inside the single-column PGM strip.
  static GlyphSheet load(const std::filesystem::path& pgm, const std::filesystem::path& index);
  static GlyphSheet parse(std::string_view pgm_bytes, std::string_view index_text);

  const Bitmap& get(std::string_view id) const;
  bool contains(std::string_view id) const { return glyphs_.find(id) != glyphs_.end(); }

 private:
  std::map<std::string, Bitmap, std::less<>> glyphs_;
};

struct WallSegment {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

std::vector<WallSegment> parse_walls(std::string_view text);
std::vector<WallSegment> load_walls(const std::filesystem::path& path);

struct PixelRect {
  int x = 0, y = 0, w = 0, h = 0;

  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool intersects(const PixelRect& o) const {
    return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
  }
};

class Renderer {
 public:
  /// Validates placement: every glyph must lie inside the image and clear of
  /// walls, other glyphs and the command area.
  Renderer(RenderProfile profile, SensorManifest manifest, std::vector<WallSegment> walls,
           const GlyphSheet& glyphs);

  /// Loads `sensors_<name>.txt`, `walls_<name>.txt` and the glyph sheet.
  static Renderer reference(std::string_view profile_name,
                            const std::filesystem::path& data_dir = default_data_dir());

  /// Requires validate_state(state, manifest()) to hold for every unmasked sensor.
  StateImage render(const EnvState& state, const SensorMask& mask = {}) const;

  const RenderProfile& profile() const { return profile_; }
  const SensorManifest& manifest() const { return manifest_; }
  PixelRect glyph_box(std::size_t sensor_index) const { return boxes_[sensor_index]; }
  PixelRect command_box() const { return command_box_; }
  const StateImage& background() const { return base_; }

 private:
  void draw_sensor(StateImage& img, std::size_t index, double value) const;
  void draw_command(StateImage& img, const VoiceCommand& command) const;

  RenderProfile profile_;
  SensorManifest manifest_;
  StateImage base_;
  std::vector<PixelRect> boxes_;
  PixelRect command_box_;
  std::array<Bitmap, 3> kind_glyphs_;
  std::map<Verb, Bitmap> verb_glyphs_;
  std::map<Object, Bitmap> object_glyphs_;
};

/// Drops masked readings (and the command when masked). Unknown ids are
/// ignored with a warning.
EnvState apply_mask(const EnvState& state, const SensorMask& mask);

/// Binary PGM ("P5"), maxval 255.
std::string export_pgm(const StateImage& image);
/// Parses square P5 images with maxval 255; comments are accepted.
StateImage parse_pgm(std::string_view bytes);

}  // namespace homedqn
