#!/usr/bin/env python3
"""Writes tasks/<id>.json for the 30 benchmark tasks.

Run from the repository root: python3 tools/make_catalog.py
"""

import json
import math
import pathlib
import sys

PI = math.pi


def box(name, w, l, h, **kw):
    return dict(name=name, shape="box", size=[w, l, h], **kw)


def cyl(name, d, h, **kw):
    return dict(name=name, shape="cylinder", size=[d, d, h], **kw)


def walls(w, l, h, t, prefix="wall"):
    """Four thin walls along the inside of a w x l footprint."""
    w, l, h, t = (round(v, 6) for v in (w, l, h, t))
    return [
        dict(name=f"{prefix} front", offset=[0.0, round(-(l - t) / 2, 6), 0.0], yaw=PI / 2, size=[t, w, h]),
        dict(name=f"{prefix} back", offset=[0.0, round((l - t) / 2, 6), 0.0], yaw=PI / 2, size=[t, w, h]),
        dict(name=f"{prefix} left", offset=[round(-(w - t) / 2, 6), 0.0, 0.0], yaw=0.0, size=[t, l, h]),
        dict(name=f"{prefix} right", offset=[round((w - t) / 2, 6), 0.0, 0.0], yaw=0.0, size=[t, l, h]),
    ]


def rng(x, y, yaw=(0.0, 0.0)):
    return dict(x=list(x), y=list(y), yaw=list(yaw))


def on(anchor, support="top", offset=(0.0, 0.0, 0.0, 0.0)):
    return dict(anchor=anchor, support=support, offset=list(offset))


SODA_CAN = (0.066, 0.12)
APPLE = (0.075, 0.07)
ORANGE = (0.07, 0.065)
PEAR = (0.065, 0.09)
BOTTLE = (0.065, 0.22)
SPONGE = (0.06, 0.09, 0.035)
CHIP_BAG = (0.06, 0.16, 0.05)


def bowl(name="bowl"):
    d, h = 0.16, 0.06
    return cyl(name, d, h, container=True, floor_thickness=0.008, parts=walls(d * 0.7, d * 0.7, h, 0.01, "rim"))


def cup(name, d, h):
    return cyl(name, d, h, container=True, floor_thickness=0.008, parts=walls(d * 0.7, d * 0.7, h, 0.006))


def plate():
    return cyl("plate", 0.22, 0.02, graspable=False)


TASKS = []


def task(id, instruction, objects, randomization, checker, params, notes=""):
    TASKS.append(dict(id=id, instruction=instruction, objects=objects, randomization=randomization,
                      checker=checker, checker_params=params, proxy_notes=notes))


SPATIAL_NOTE = ("Spatial qualifiers in the instruction are resolved through object names, standing in for an "
                "open-vocabulary detector; randomization ranges keep the named roles true in every trial.")
YAW_FREE = (-PI / 2, PI / 2)

task("pick_left_chip_bag", "pick the chip bag on the left of the table",
     [box("left_chip_bag", *CHIP_BAG), box("right_chip_bag", *CHIP_BAG)],
     {"left_chip_bag": rng((-0.3, -0.15), (0.3, 0.55), YAW_FREE),
      "right_chip_bag": rng((0.15, 0.3), (0.3, 0.55), YAW_FREE)},
     "lift", {"target": "left_chip_bag", "min_gain": 0.10}, SPATIAL_NOTE)

task("pick_rightmost_can", "pick the rightmost can",
     [cyl("left_soda_can", *SODA_CAN), cyl("middle_soda_can", *SODA_CAN), cyl("rightmost_soda_can", *SODA_CAN)],
     {"left_soda_can": rng((-0.3, -0.2), (0.3, 0.55)), "middle_soda_can": rng((-0.05, 0.05), (0.3, 0.55)),
      "rightmost_soda_can": rng((0.2, 0.3), (0.3, 0.55))},
     "lift", {"target": "rightmost_soda_can", "min_gain": 0.10}, SPATIAL_NOTE)

task("pick_middle_fruit", "pick the fruit in the middle",
     [cyl("left_fruit_apple", *APPLE), cyl("middle_fruit_pear", *PEAR), cyl("right_fruit_orange", *ORANGE)],
     {"left_fruit_apple": rng((-0.3, -0.2), (0.3, 0.55)), "middle_fruit_pear": rng((-0.05, 0.05), (0.3, 0.55)),
      "right_fruit_orange": rng((0.2, 0.3), (0.3, 0.55))},
     "lift", {"target": "middle_fruit_pear", "min_gain": 0.10}, SPATIAL_NOTE)

task("pick_chip_bag_right_of_can", "pick the chip bag which is to the right of the can",
     [cyl("soda_can", *SODA_CAN), box("chip_bag_left_of_can", *CHIP_BAG), box("chip_bag_right_of_can", *CHIP_BAG)],
     {"soda_can": rng((-0.05, 0.05), (0.35, 0.5)),
      "chip_bag_left_of_can": rng((-0.3, -0.15), (0.3, 0.55), YAW_FREE),
      "chip_bag_right_of_can": rng((0.15, 0.3), (0.3, 0.55), YAW_FREE)},
     "lift", {"target": "chip_bag_right_of_can", "min_gain": 0.10}, SPATIAL_NOTE)

task("knock_over_left_bottle", "knock over the left bottle",
     [cyl("left_bottle", *BOTTLE), cyl("right_bottle", *BOTTLE)],
     {"left_bottle": rng((-0.25, -0.1), (0.35, 0.5)), "right_bottle": rng((0.1, 0.25), (0.35, 0.5))},
     "topple", {"target": "left_bottle", "min_displacement": 0.05},
     "Rigid boxes cannot tip in the kinematic simulator. Knocked over is approximated as: pushed at least "
     "5 cm along the table, first moved by a gripper contact above its center of mass, never lifted. "
     + SPATIAL_NOTE)

task("move_right_fruit_to_bottle", "move the fruit which is on the right towards the bottle",
     [cyl("left_fruit_apple", *APPLE), cyl("right_fruit_orange", *ORANGE), cyl("bottle", *BOTTLE)],
     {"left_fruit_apple": rng((-0.3, -0.2), (0.25, 0.4)), "right_fruit_orange": rng((0.2, 0.3), (0.25, 0.4)),
      "bottle": rng((-0.1, 0.1), (0.5, 0.6))},
     "proximity", {"target": "right_fruit_orange", "reference": "bottle", "max_gap": 0.05},
     "Within 5 cm is measured between footprint edges, since two center points cannot come closer than "
     "the sum of the radii. " + SPATIAL_NOTE)

task("move_banana_near_pear", "move the banana near the pear",
     [box("banana", 0.04, 0.18, 0.04), cyl("pear", *PEAR)],
     {"banana": rng((-0.3, -0.15), (0.3, 0.55), YAW_FREE), "pear": rng((0.1, 0.3), (0.3, 0.55))},
     "proximity", {"target": "banana", "reference": "pear", "max_gap": 0.05},
     "Within 5 cm is measured between footprint edges.")

task("push_left_bottle_to_orange", "push the bottle on the left side to the orange",
     [cyl("left_bottle", *BOTTLE), cyl("right_bottle", *BOTTLE), cyl("orange", *ORANGE)],
     {"left_bottle": rng((-0.3, -0.2), (0.3, 0.4)), "right_bottle": rng((0.2, 0.3), (0.3, 0.4)),
      "orange": rng((-0.05, 0.05), (0.3, 0.4))},
     "push", {"target": "left_bottle", "reference": "orange", "max_gap": 0.05, "min_displacement": 0.01},
     "Within 5 cm is measured between footprint edges; the bottle's bottom must stay within 5 mm of the table "
     "at every tick. " + SPATIAL_NOTE)

task("move_can_to_bottom", "move the can to the bottom of the table",
     [cyl("soda_can", *SODA_CAN)],
     {"soda_can": rng((-0.25, 0.25), (0.45, 0.6))},
     "edge_proximity", {"target": "soda_can", "edge_y": 0.1, "max_distance": 0.10},
     "The bottom edge of the table is taken as the near edge of the workspace, y = 0.1 m; the can's center "
     "must end within 10 cm of it, resting on the table.")

task("move_lonely_object", "move the lonely object to the others",
     [cyl("apple", *APPLE), cyl("orange", *ORANGE), cyl("soda_can", *SODA_CAN)],
     {"apple": rng((-0.3, -0.22), (0.45, 0.55)), "orange": rng((-0.14, -0.08), (0.45, 0.55)),
      "soda_can": rng((0.2, 0.3), (0.25, 0.35))},
     "proximity_any", {"target": "soda_can", "references": ["apple", "orange"], "max_gap": 0.05},
     "The lonely object is the soda can, placed far from the other two in every trial. Within 5 cm is "
     "measured between footprint edges.")

task("push_can_right", "push the can towards the right",
     [cyl("soda_can", *SODA_CAN)],
     {"soda_can": rng((-0.25, 0.0), (0.3, 0.55))},
     "push", {"target": "soda_can", "direction": [1.0, 0.0], "min_distance": 0.10},
     "Right is +x. The can's bottom must stay within 5 mm of the table at every tick.")

task("sponge_clean_can", "use the sponge to clean the can",
     [box("sponge", *SPONGE), cyl("soda_can", *SODA_CAN)],
     {"sponge": rng((-0.3, -0.15), (0.3, 0.55), YAW_FREE), "soda_can": rng((0.05, 0.25), (0.3, 0.55))},
     "contact", {"target": "sponge", "other": "soda_can", "max_gap": 0.005},
     "Touching means footprints within 5 mm of each other with overlapping height ranges at some tick.")

task("place_apple_in_bowl", "place the apple in the bowl",
     [cyl("apple", *APPLE), bowl()],
     {"apple": rng((-0.3, -0.1), (0.3, 0.55)), "bowl": rng((0.05, 0.28), (0.3, 0.55))},
     "containment", {"target": "apple", "container": "bowl"},
     "Inside means the apple's final center lies in the bowl footprint, its bottom below the bowl's top, "
     "and the gripper has let go.")

task("apple_from_bowl_to_table", "pick the apple from the bowl and place it on the table",
     [bowl(), dict(cyl("apple", *APPLE), relative_to=on("bowl", "inside"))],
     {"bowl": rng((-0.2, 0.2), (0.35, 0.55))},
     "outside_container", {"target": "apple", "container": "bowl"},
     "The apple must end outside the bowl footprint, resting on the table, with the gripper open.")

task("wipe_plate", "wipe the plate with the sponge",
     [plate(), box("sponge", *SPONGE)],
     {"plate": rng((-0.05, 0.15), (0.35, 0.5)), "sponge": rng((-0.32, -0.22), (0.3, 0.55), YAW_FREE)},
     "wipe", {"target": "sponge", "surface": "plate", "band": 0.01, "min_path": 0.15, "min_changes": 2},
     "Wiping motion is operationalized as at least 0.15 m of sponge travel with at least two heading changes "
     "above 90 degrees, all within one unbroken stretch where the sponge rests within 1 cm of the plate's top "
     "and over its footprint.")

task("shake_mustard_bottle", "shake the mustard bottle",
     [box("mustard_bottle", 0.06, 0.09, 0.19)],
     {"mustard_bottle": rng((-0.2, 0.2), (0.3, 0.55), YAW_FREE)},
     "shake", {"target": "mustard_bottle", "amplitude": 0.03, "min_reversals": 2},
     "A shake is a reversal of at least 3 cm along x, y or z; two are required.")

task("stir_mug", "stir the mug with the spoon",
     [cup("mug", 0.09, 0.10), box("spoon", 0.015, 0.02, 0.16)],
     {"mug": rng((0.0, 0.2), (0.35, 0.55)), "spoon": rng((-0.3, -0.15), (0.3, 0.55), YAW_FREE)},
     "stir", {"target": "spoon", "container": "mug", "min_angle": 1.5 * PI, "min_radius": 0.005},
     "The spoon starts upright. Stirring is at least 1.5 turns' worth of angle (270 degrees) swept by the "
     "spoon around the mug's center during one unbroken stretch with the spoon over the mug and below its top.")

task("draw_star", "draw a five-pointed star 10cm wide on the table with a pen",
     [cyl("pen", 0.015, 0.14)],
     {"pen": rng((-0.3, -0.15), (0.3, 0.55))},
     "star", {"target": "pen", "radius": 0.05, "tolerance": 0.015, "band": 0.01},
     "10 cm wide is read as a circumscribed diameter, so the outer vertices lie 5 cm from the center. The "
     "pen's tip (its bottom) must be within 1 cm of the table; the traced path must pass within 1.5 cm of all "
     "five outer and five inner vertices of a best-fit regular star, any center and rotation.")

task("drop_ball_in_cup", "drop the ball into the cup",
     [cyl("ball", 0.04, 0.04), cup("cup", 0.09, 0.10)],
     {"ball": rng((-0.3, -0.1), (0.3, 0.55)), "cup": rng((0.05, 0.28), (0.3, 0.55))},
     "containment", {"target": "ball", "container": "cup"},
     "The ball is a short cylinder; inside is checked as for the bowl.")

task("align_bottle_vertically", "align the bottle vertically",
     [box("bottle", 0.07, 0.22, 0.07)],
     {"bottle": rng((-0.2, 0.2), (0.35, 0.5), (0.7, 2.4))},
     "align_axis", {"target": "bottle", "axis": [0.0, 1.0], "tolerance": 10.0 * PI / 180.0},
     "The bottle lies on its side throughout. Vertically means its long axis points at the top or bottom edge "
     "of the table, the y axis, within 10 degrees.")

task("open_bottle_cap", "open the bottle cap",
     [cyl("bottle", 0.07, 0.18, graspable=False, movable=False),
      dict(cyl("bottle_cap", 0.032, 0.02), relative_to=on("bottle", "top"))],
     {"bottle": rng((-0.2, 0.2), (0.35, 0.55))},
     "rotate", {"target": "bottle_cap", "min_angle": PI / 2, "max_lift": 0.01, "direction": "any"},
     "The threaded cap is a small cylinder resting on a fixed bottle. Opened means turned by at least 90 "
     "degrees while never raised more than 1 cm.")

task("insert_bread_in_toaster", "insert the bread into the toaster",
     [box("toaster", 0.16, 0.26, 0.18, graspable=False, movable=False, container=True, floor_thickness=0.03,
          parts=[dict(name="left block", offset=[-0.05, 0.0, 0.0], yaw=0.0, size=[0.06, 0.26, 0.18]),
                 dict(name="right block", offset=[0.05, 0.0, 0.0], yaw=0.0, size=[0.06, 0.26, 0.18]),
                 dict(name="slot front", offset=[0.0, -0.12, 0.0], yaw=PI / 2, size=[0.02, 0.04, 0.18]),
                 dict(name="slot back", offset=[0.0, 0.12, 0.0], yaw=PI / 2, size=[0.02, 0.04, 0.18])]),
      box("bread", 0.015, 0.10, 0.10)],
     {"toaster": rng((0.05, 0.25), (0.35, 0.5)), "bread": rng((-0.3, -0.15), (0.3, 0.55), YAW_FREE)},
     "containment", {"target": "bread", "container": "toaster"},
     "The toaster has one 4 cm slot between two solid blocks; inside means the bread's center is over the "
     "toaster and its bottom below the toaster's top, released.")

task("pick_up_bowl", "pick up the bowl",
     [bowl()],
     {"bowl": rng((-0.2, 0.2), (0.3, 0.55))},
     "lift", {"target": "bowl", "min_gain": 0.10},
     "The bowl is too wide for the gripper; it can only be held by one of its rim walls.")

task("move_pan_left", "move the pan to the left",
     [cyl("pan", 0.24, 0.05, parts=[dict(name="handle", offset=[0.19, 0.0, 0.0], yaw=PI / 2,
                                         size=[0.03, 0.14, 0.03])])],
     {"pan": rng((-0.05, 0.05), (0.35, 0.5), (-0.3, 0.3))},
     "displacement", {"target": "pan", "direction": [-1.0, 0.0], "min_distance": 0.10},
     "Left is -x. The pan body is too wide to grasp; its handle is a graspable part.")

task("wipe_table_avoid_plate", "wipe the table with the sponge, while avoiding the plate on the table",
     [plate(), box("sponge", *SPONGE)],
     {"plate": rng((0.1, 0.25), (0.35, 0.5)), "sponge": rng((-0.3, -0.15), (0.3, 0.55), YAW_FREE)},
     "wipe", {"target": "sponge", "surface": "table", "avoid": "plate", "band": 0.01, "min_path": 0.15,
              "min_changes": 2},
     "Wiping as for the plate task, with the sponge within 1 cm of the table; the sponge must never touch "
     "the plate.")

task("draw_circle", "draw a circle 10cm wide with its centre at [0.0,0.3,0.0] with the gripper closed",
     [box("eraser", 0.03, 0.05, 0.02)],
     {"eraser": rng((0.2, 0.3), (0.5, 0.6), YAW_FREE)},
     "circle", {"center": [0.0, 0.3, 0.0], "radius": 0.05, "tolerance": 0.015, "max_z": 0.01,
                "min_coverage": 1.8 * PI},
     "The circle is traced by the closed gripper within 1 cm of the table; every point of that stretch must be "
     "within 1.5 cm of the 5 cm circle and the stretch must sweep at least 324 degrees. The eraser only keeps "
     "the scene non-empty.")

task("unplug_charger", "unplug the charger",
     [box("extension_plug", 0.08, 0.25, 0.04, graspable=False, movable=False, container=True,
          floor_thickness=0.01, parts=walls(0.08, 0.25, 0.04, 0.008)),
      dict(box("charger", 0.04, 0.05, 0.07), relative_to=on("extension_plug", "inside", (0.0, 0.06, 0.0, 0.0)))],
     {"extension_plug": rng((-0.2, 0.2), (0.35, 0.5), YAW_FREE)},
     "removed_from", {"target": "charger", "container": "extension_plug"},
     "The socket is a shallow container around the charger; removed means the charger is clear of the plug's "
     "footprint or entirely above its top.")

task("take_out_tissue", "take out tissue from the dispenser",
     [box("tissue_dispenser", 0.12, 0.22, 0.09, graspable=False, movable=False, container=True,
          floor_thickness=0.005, parts=walls(0.12, 0.22, 0.09, 0.008)),
      dict(box("tissue", 0.01, 0.08, 0.12), relative_to=on("tissue_dispenser", "inside"))],
     {"tissue_dispenser": rng((-0.2, 0.2), (0.35, 0.5), YAW_FREE)},
     "removed_from", {"target": "tissue", "container": "tissue_dispenser"},
     "The tissue is a thin rigid slab standing in the dispenser; removed means clear of the dispenser's "
     "footprint or entirely above its top.")

task("lower_lamp_brightness", "lower the brightness of the lamp",
     [box("lamp", 0.14, 0.14, 0.05, graspable=False, movable=False),
      dict(cyl("dimmer_switch", 0.03, 0.025), relative_to=on("lamp", "top", (0.03, -0.03, 0.0, 0.0)))],
     {"lamp": rng((-0.2, 0.2), (0.35, 0.55))},
     "rotate", {"target": "dimmer_switch", "min_angle": PI / 4, "max_lift": 0.01, "direction": "ccw"},
     "The dimmer is a knob on a fixed lamp base. Lowered means turned anticlockwise seen from above (positive "
     "yaw) by at least 45 degrees without being lifted more than 1 cm.")

task("hang_towel_on_rack", "hang the towel on the rack",
     [box("rack", 0.04, 0.30, 0.20, graspable=False, movable=False), box("towel", 0.05, 0.20, 0.02)],
     {"rack": rng((0.1, 0.25), (0.35, 0.5)), "towel": rng((-0.3, -0.15), (0.3, 0.55), YAW_FREE)},
     "rest_on", {"target": "towel", "support": "rack", "tolerance": 0.01},
     "The rack is a rail; hung means the towel's center rests over the rail within 1 cm of its top, released "
     "and clear of the table.")


def main():
    root = pathlib.Path(__file__).resolve().parent.parent
    out = root / "tasks"
    out.mkdir(exist_ok=True)
    ids = set()
    for t in TASKS:
        assert t["id"] not in ids, t["id"]
        ids.add(t["id"])
        (out / f"{t['id']}.json").write_text(json.dumps(t, indent=2) + "\n")
    print(f"wrote {len(TASKS)} tasks to {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
