#!/usr/bin/env python3
"""Regenerates the reference home description shipped under data/.

Produces the sensor manifests (full and desk profiles), the floor-plan wall
files, the glyph sheet with its index and the generation rule table. The
output is deterministic; rerunning it must leave `git status` clean.
"""

import pathlib
import sys

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"

# ---------------------------------------------------------------- glyphs

GLYPHS = {
    "binary": """
............
............
....####....
....####....
..########..
..########..
....####....
....####....
....####....
....####....
............
............
""",
    "continuous": """
############
#..........#
#.##.......#
#.##.......#
#...##.....#
#...##.....#
#.....##...#
#.....##...#
#.......##.#
#.......##.#
#..........#
############
""",
    "gauge": """
############
#..........#
#..........#
#..........#
#..........#
#..........#
#..........#
#..........#
#..........#
#..........#
#..........#
############
""",
    "verb_turn_on": """
............
....####....
..########..
.##########.
.##########.
############
############
.##########.
.##########.
..########..
....####....
............
""",
    "verb_turn_off": """
....####....
..########..
.###....###.
.##......##.
##........##
##........##
##........##
##........##
.##......##.
.###....###.
..########..
....####....
""",
    "verb_open": """
.....##.....
....####....
...######...
..########..
.####..####.
####....####
.....##.....
.....##.....
.....##.....
.....##.....
.....##.....
.....##.....
""",
    "verb_close": """
.....##.....
.....##.....
.....##.....
.....##.....
.....##.....
.....##.....
####....####
.####..####.
..########..
...######...
....####....
.....##.....
""",
    "verb_give_time": """
..########..
.##......##.
##...##...##
#....##....#
#....##....#
#....######.
#....######.
#..........#
#..........#
##........##
.##......##.
..########..
""",
    "verb_give_temperature": """
....####....
....#..#....
....#..#....
....####....
....####....
....####....
....####....
...######...
..########..
..########..
..########..
...######...
""",
    "verb_call_emergency": """
....####....
....####....
....####....
....####....
############
############
############
############
....####....
....####....
....####....
....####....
""",
    "verb_call_parent": """
....####....
...######...
...######...
....####....
............
..########..
.##########.
.##########.
.##.####.##.
.##.####.##.
....#..#....
....#..#....
""",
    "object_light": """
...######...
..########..
.####..####.
.###....###.
.###....###.
..###..###..
...######...
....####....
....####....
....####....
....####....
.....##.....
""",
    "object_radio": """
..........##
........##..
......##....
############
#..........#
#.###..###.#
#.###..###.#
#.###..###.#
#..........#
############
##........##
##........##
""",
    "object_blinds": """
############
############
............
############
############
............
############
############
............
############
############
............
""",
    "object_curtains": """
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
##.##.##.##.
""",
    "object_speech": """
############
##........##
#..######..#
#..........#
#..######..#
#..........#
##........##
############
..###.......
..##........
..#.........
............
""",
    "object_phone": """
###......###
####....####
####....####
###......###
.###....###.
..###..###..
...######...
....####....
............
############
############
############
""",
}


def bitmap(art):
    rows = [r for r in art.strip("\n").split("\n")]
    assert len(rows) == 12, rows
    assert all(len(r) == 12 for r in rows), rows
    return [[1 if c == "#" else 0 for c in r] for r in rows]


def downsample(bits):
    out = []
    for y in range(6):
        row = []
        for x in range(6):
            s = (bits[2 * y][2 * x] + bits[2 * y][2 * x + 1] +
                 bits[2 * y + 1][2 * x] + bits[2 * y + 1][2 * x + 1])
            row.append(1 if s >= 2 else 0)
        out.append(row)
    return out


def fill(bits):
    n = sum(len(r) for r in bits)
    return sum(sum(r) for r in bits) / n


def write_glyphs():
    names = list(GLYPHS)
    maps = {n: bitmap(GLYPHS[n]) for n in names}
    # Binary glyphs render as figure or inverted figure; both polarities
    # must stay 64 levels away from the black floor at both scales.
    for n, b in maps.items():
        f = fill(b)
        assert 0.25 <= f <= 0.75 or n in ("continuous", "gauge"), (n, f)
        if not n.startswith(("verb_", "object_")):
            d = fill(downsample(b))
            assert 0.25 <= d, (n, d)
    distinct = {tuple(map(tuple, b)) for b in maps.values()}
    assert len(distinct) == len(maps)
    height = 12 * len(names)
    payload = bytearray()
    for n in names:
        for row in maps[n]:
            payload.extend(255 if v else 0 for v in row)
    (DATA / "glyphs.pgm").write_bytes(b"P5\n12 %d\n255\n" % height + bytes(payload))
    with open(DATA / "glyphs.txt", "w") as f:
        f.write("# glyph_id;offset (pixel row in glyphs.pgm, 12x12 each)\n")
        for i, n in enumerate(names):
            f.write("%s;%d\n" % (n, 12 * i))


# --------------------------------------------------------------- sensors

# (id, kind, lo, hi); binary entries carry (0, 1).
def B(name):
    return (name, "binary", 0, 1)


def C(name, lo, hi):
    return (name, "continuous", lo, hi)


def G(name, lo, hi):
    return (name, "gauge", lo, hi)


FULL = {
    "kitchen": [
        B("kitchen_presence_0"), B("kitchen_presence_1"), B("kitchen_presence_2"),
        B("kitchen_hotplate"), B("kitchen_table_chair"), B("kitchen_door_cupboard_0"),
        B("kitchen_door_fridge"), B("kitchen_light_sink"), B("kitchen_light_ceiling"),
        B("kitchen_blinds"), B("kitchen_door_cupboard_1"), B("kitchen_window"),
        B("kitchen_dishwasher"), B("kitchen_door_entrance"), B("kitchen_oven"),
        C("kitchen_sound", 0, 100), C("kitchen_light_level", 0, 1000),
        C("kitchen_temperature", 10, 35), C("kitchen_humidity", 0, 100),
        C("kitchen_co2", 300, 2000),
    ],
    "bedroom": [
        B("bedroom_presence_0"), B("bedroom_presence_1"), B("bedroom_presence_2"),
        B("bedroom_bed_pressure"), B("bedroom_wardrobe"), B("bedroom_light_bedside"),
        B("bedroom_light_ceiling"), B("bedroom_radio"), B("bedroom_blinds"),
        B("bedroom_curtains"), B("bedroom_door"), B("bedroom_window"),
        B("bedroom_bedside_switch"), B("bedroom_drawer"),
        C("bedroom_sound", 0, 100), C("bedroom_temperature", 10, 35),
        C("bedroom_light_level", 0, 1000), C("bedroom_humidity", 0, 100),
        C("bedroom_co2", 300, 2000),
    ],
    "bathroom": [
        B("bathroom_presence_0"), B("bathroom_presence_1"), B("bathroom_door_cabinet"),
        B("bathroom_shower"), B("bathroom_door"), B("bathroom_window"),
        B("bathroom_light"), B("bathroom_toilet_flush"),
        C("bathroom_sound", 0, 100), C("bathroom_temperature", 10, 35),
        C("bathroom_humidity", 0, 100), C("bathroom_light_level", 0, 1000),
    ],
    "study": [
        B("study_presence_0"), B("study_presence_1"), B("study_presence_2"),
        B("study_chair_pressure"), B("study_computer"), B("study_door_cabinet"),
        B("study_light_ceiling"), B("study_blinds"), B("study_phone"),
        B("study_door"), B("study_window"), B("study_desk_lamp"),
        C("study_sound", 0, 100), C("study_temperature", 10, 35),
        C("study_light_level", 0, 1000), C("study_humidity", 0, 100),
        C("study_co2", 300, 2000),
    ],
}

FULL_GAUGES = [
    ("kitchen", G("kitchen_water", 0, 20)),
    ("kitchen", G("kitchen_electricity", 0, 5000)),
    ("bathroom", G("bathroom_water", 0, 20)),
    ("bathroom", G("bathroom_hot_water", 0, 20)),
    ("bedroom", G("bedroom_electricity", 0, 3000)),
    ("study", G("study_electricity", 0, 3000)),
    ("kitchen", G("home_electricity", 0, 10000)),
    ("kitchen", G("home_water", 0, 40)),
    ("bathroom", G("bathroom_electricity", 0, 3000)),
    ("kitchen", G("home_gas", 0, 10)),
    ("study", G("outdoor_temperature", -20, 45)),
    ("study", G("outdoor_light", 0, 100000)),
    ("bedroom", G("home_phase_1", 0, 4000)),
]

DESK = {
    "kitchen": ["kitchen_presence_0", "kitchen_presence_1", "kitchen_presence_2",
                "kitchen_hotplate", "kitchen_table_chair", "kitchen_door_cupboard_0",
                "kitchen_door_fridge", "kitchen_light_sink", "kitchen_light_ceiling",
                "kitchen_blinds", "kitchen_sound", "kitchen_light_level"],
    "bedroom": ["bedroom_presence_0", "bedroom_presence_1", "bedroom_presence_2",
                "bedroom_bed_pressure", "bedroom_wardrobe", "bedroom_light_bedside",
                "bedroom_light_ceiling", "bedroom_radio", "bedroom_blinds",
                "bedroom_curtains", "bedroom_sound", "bedroom_temperature",
                "bedroom_light_level"],
    "bathroom": ["bathroom_presence_0", "bathroom_presence_1", "bathroom_door_cabinet",
                 "bathroom_shower", "bathroom_sound", "bathroom_temperature",
                 "bathroom_humidity"],
    "study": ["study_presence_0", "study_presence_1", "study_presence_2",
              "study_chair_pressure", "study_computer", "study_door_cabinet",
              "study_light_ceiling", "study_blinds", "study_phone", "study_sound",
              "study_temperature", "study_light_level"],
}
DESK_GAUGES = ["kitchen_water", "kitchen_electricity", "bathroom_water",
               "bedroom_electricity", "study_electricity", "home_electricity",
               "home_water"]

# Room origin tables: (room, x slots, y slots), in cell units.
FULL_SLOTS = {
    "kitchen": ([2, 5, 8, 11, 14, 17], [6, 9, 12, 15]),
    "bedroom": ([22, 25, 28, 31, 34, 37, 40], [6, 9, 12, 15]),
    "bathroom": ([2, 5, 8, 11, 14, 17], [20, 23, 26, 29]),
    "study": ([22, 25, 28, 31, 34, 37, 40], [20, 23, 26, 29]),
}
FULL_GAUGE_ROW = (1, [1, 4, 7, 10, 13, 16, 19, 22, 25, 28, 31, 34, 37, 40])

DESK_SLOTS = {
    "kitchen": ([1, 3, 5, 7], [3, 5, 7]),
    "bedroom": ([11, 13, 15, 17, 19], [3, 5, 7]),
    "bathroom": ([1, 3, 5, 7], [10, 12, 14]),
    "study": ([11, 13, 15, 17, 19], [10, 12, 14]),
}
DESK_GAUGE_ROW = (0, [1, 3, 5, 7, 9, 11, 13, 15, 17, 19])


def layout(rooms, gauges, slots, gauge_row):
    lines = []
    for room, sensors in rooms.items():
        xs, ys = slots[room]
        cells = [(x, y) for y in ys for x in xs]
        assert len(sensors) <= len(cells), room
        for (sid, kind, lo, hi), (x, y) in zip(sensors, cells):
            lines.append((sid, room, kind, lo, hi, x, y))
    gy, gxs = gauge_row
    assert len(gauges) <= len(gxs)
    for (room, (sid, kind, lo, hi)), x in zip(gauges, gxs):
        lines.append((sid, room, kind, lo, hi, x, gy))
    return lines


def write_manifest(name, lines, header):
    with open(DATA / name, "w") as f:
        f.write(header)
        f.write("# id;room;kind;lo;hi;cell_x;cell_y\n")
        for l in lines:
            f.write("%s;%s;%s;%g;%g;%d;%d\n" % l)


def write_manifests():
    full = layout(FULL, FULL_GAUGES, FULL_SLOTS, FULL_GAUGE_ROW)
    assert len(full) == 81, len(full)
    assert sum(1 for l in full if l[2] == "binary") == 49
    write_manifest("sensors_full.txt", full,
                   "# Reference sensor inventory (full profile, 42x42 cell grid).\n"
                   "# Stand-in manifest: ids and placement are this project's own.\n")

    by_id = {}
    for room, sensors in FULL.items():
        for s in sensors:
            by_id[s[0]] = (room, s)
    for room, s in FULL_GAUGES:
        by_id[s[0]] = (room, s)
    desk_rooms = {room: [by_id[i][1] for i in ids] for room, ids in DESK.items()}
    for room, ids in DESK.items():
        assert all(by_id[i][0] == room for i in ids)
    desk_gauges = [by_id[i] for i in DESK_GAUGES]
    desk = layout(desk_rooms, desk_gauges, DESK_SLOTS, DESK_GAUGE_ROW)
    write_manifest("sensors_desk.txt", desk,
                   "# Reduced sensor inventory for the 64x64 desk profile (21x21 cell grid).\n")


def write_walls():
    full = [(0, 4, 42, 4), (0, 34, 42, 34), (0, 4, 0, 34), (42, 4, 42, 34),
            (20, 4, 20, 34), (0, 18, 42, 18)]
    desk = [(0, 2, 21, 2), (0, 16, 21, 16), (0, 2, 0, 16), (21, 2, 21, 16),
            (10, 2, 10, 16), (0, 9, 21, 9)]
    for name, segs in (("walls_full.txt", full), ("walls_desk.txt", desk)):
        with open(DATA / name, "w") as f:
            f.write("# x0;y0;x1;y1 in cell units\n")
            for s in segs:
                f.write("%d;%d;%d;%d\n" % s)


RULES = """\
# Generation rules for the synthetic home.
#
# Action lines:  location;activity;command_verb;command_object -> verb;device;place
# Sensor lines:  location/activity -> sensor_id;value  or  sensor_id;lo..hi
# '*' matches any location or activity. For actions the first matching line
# wins in deterministic mode; otherwise one matching line is drawn uniformly.
# Sensors named on any sensor line rest at their lower bound unless the
# current annotation constrains them.

activities kitchen: cook wash_dishes eat clean none
activities bathroom: clean none
activities bedroom: nap read clean none
activities study: read converse clean none

kitchen;cook;turn_on;light -> turn_on;light_sink;kitchen
kitchen;wash_dishes;turn_on;light -> turn_on;light_sink;kitchen
kitchen;eat;turn_on;light -> turn_on;light_ceiling;kitchen
kitchen;clean;turn_on;light -> turn_on;light_all;kitchen
kitchen;none;turn_on;light -> turn_on;light_ceiling;kitchen
bedroom;nap;turn_on;light -> turn_on;light_bedside;bedroom
bedroom;read;turn_on;light -> turn_on;light_bedside;bedroom
bedroom;clean;turn_on;light -> turn_on;light_all;bedroom
bedroom;none;turn_on;light -> turn_on;light_ceiling;bedroom
study;*;turn_on;light -> turn_on;light_ceiling;study

kitchen;cook;turn_off;light -> turn_off;light_sink;kitchen
kitchen;wash_dishes;turn_off;light -> turn_off;light_sink;kitchen
kitchen;eat;turn_off;light -> turn_off;light_ceiling;kitchen
kitchen;clean;turn_off;light -> turn_off;light_all;kitchen
kitchen;none;turn_off;light -> turn_off;light_all;kitchen
bedroom;nap;turn_off;light -> turn_off;light_all;bedroom
bedroom;read;turn_off;light -> turn_off;light_bedside;bedroom
bedroom;clean;turn_off;light -> turn_off;light_all;bedroom
bedroom;none;turn_off;light -> turn_off;light_ceiling;bedroom
study;*;turn_off;light -> turn_off;light_ceiling;study

*;*;turn_on;radio -> turn_on;radio;bedroom
*;*;turn_off;radio -> turn_off;radio;bedroom

kitchen;*;open;blinds -> open;blinds;kitchen
bedroom;*;open;blinds -> open;blinds;bedroom
study;*;open;blinds -> open;blinds;study
kitchen;*;close;blinds -> close;blinds;kitchen
bedroom;*;close;blinds -> close;blinds;bedroom
study;*;close;blinds -> close;blinds;study

*;*;open;curtains -> open;curtains;bedroom
*;*;close;curtains -> close;curtains;bedroom

kitchen;*;give_time;speech -> give_time;speakers;kitchen
bathroom;*;give_time;speech -> give_time;speakers;kitchen
bedroom;*;give_time;speech -> give_time;speakers;bedroom
study;*;give_time;speech -> give_time;speakers;study
kitchen;*;give_temperature;speech -> give_temperature;speakers;kitchen
bathroom;*;give_temperature;speech -> give_temperature;speakers;kitchen
bedroom;*;give_temperature;speech -> give_temperature;speakers;bedroom
study;*;give_temperature;speech -> give_temperature;speakers;study

*;*;call_emergency;phone -> call_emergency;phone;study
*;*;call_parent;phone -> call_parent;phone;study

# Alternatives only reachable in non-deterministic mode.
kitchen;none;turn_on;light -> turn_on;light_all;kitchen
bedroom;read;turn_on;light -> turn_on;light_ceiling;bedroom
bathroom;*;give_time;speech -> give_time;speakers;bedroom

# Occupied-room ambience.
kitchen/* -> kitchen_sound;40..100
bathroom/* -> bathroom_sound;40..100
bedroom/* -> bedroom_sound;40..100
study/* -> study_sound;40..100

kitchen/cook -> kitchen_hotplate;1
kitchen/cook -> kitchen_electricity;2000..4500
kitchen/cook -> home_electricity;3000..6000
kitchen/cook -> kitchen_light_sink;1
kitchen/wash_dishes -> kitchen_water;8..18
kitchen/wash_dishes -> home_water;10..25
kitchen/wash_dishes -> kitchen_light_sink;1
kitchen/eat -> kitchen_table_chair;1
kitchen/eat -> kitchen_light_ceiling;1
kitchen/clean -> kitchen_door_cupboard_0;1
kitchen/clean -> kitchen_door_fridge;1
kitchen/clean -> kitchen_light_level;600..1000
bathroom/clean -> bathroom_door_cabinet;1
bathroom/clean -> bathroom_water;5..15
bedroom/nap -> bedroom_bed_pressure;1
bedroom/nap -> bedroom_light_level;0..50
bedroom/nap -> bedroom_curtains;1
bedroom/read -> bedroom_bed_pressure;1
bedroom/read -> bedroom_light_level;400..900
bedroom/read -> bedroom_light_bedside;1
bedroom/clean -> bedroom_wardrobe;1
bedroom/clean -> bedroom_light_ceiling;1
bedroom/clean -> bedroom_electricity;1500..3000
study/read -> study_chair_pressure;1
study/read -> study_light_level;400..900
study/converse -> study_computer;1
study/converse -> study_electricity;500..1500
study/clean -> study_door_cabinet;1
"""


def main():
    DATA.mkdir(exist_ok=True)
    write_glyphs()
    write_manifests()
    write_walls()
    (DATA / "rules.txt").write_text(RULES)
    return 0


if __name__ == "__main__":
    sys.exit(main())
