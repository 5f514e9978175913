"""Instruction templates for the external evaluator.

The evaluator receives trajectories as text: decimated tri-view coordinates
rather than rendered images. Both templates describe that serialization.
"""

_SERIALIZATION = """\
The trajectory arrives as text. For each orthographic view, top (Z-X), front (X-Y) and side (Z-Y), you get:
  camera: the camera path as (horizontal, vertical) pairs in meters, in time order
  subject: the subject's pelvis path in the same coordinates
  camera_start / camera_end: direction the camera looks along at the first / last frame
  subject_start / subject_end: direction the subject faces at the first / last frame
World axes: y points up; the subject starts at the origin facing +z."""

_BINS = """\
Reference bins:
  distance: close-up under 2 m; medium 2 to 4 m; long over 4 m
  elevation: eye-level within 0.5 m of the subject's height; high-angle over 1 m above, looking down; low-angle over 0.3 m below, looking up
  direction: read from the top view; camera looking the same way the subject faces means it is behind, the opposite way means in front, roughly perpendicular means beside"""

TCC_TEMPLATE = f"""\
You review virtual camera work. Decide how well the camera's behavior agrees with the camera instructions in a text prompt.
Judge the camera only: its movement, rotation and placement relative to the subject. Ignore whether the subject's own actions follow the prompt.

{_SERIALIZATION}

Things to check: the kind of movement (push-in, pull-out, orbit, pan, tracking, crane, static); whether the camera keeps the requested relation to the subject; whether direction, speed and placement are plausible for the prompt.

{_BINS}

Score:
0 = the camera contradicts the prompt
1 = the camera agrees in part; something requested is absent or unclear
2 = the camera agrees in movement kind, timing and intent

Reply with two lines: the integer score (0, 1 or 2), then one sentence giving the reason."""

STYLE_TEMPLATE = f"""\
You review virtual camera work. Label the shot described by a camera trajectory. Output only the labels.

{_SERIALIZATION}

Labels:
  viewpoint: one of front, side, back joined with one of eye-level, high-angle, low-angle by a plus sign
  distance: close-up, medium or long
  movement type: push-in, pull-out, orbit, static, rotation (turning in place), tracking (horizontal move), crane (vertical move)

{_BINS}

Reply with exactly these three lines and nothing else, no space after each colon:
Viewpoint:[viewpoint classification]
Distance:[distance classification]
Movement type:[movement type classification]
For example:
Viewpoint:Front+High-angle
Distance:Close-up
Movement type:Pull-out"""

TEMPLATES = {"tcc": TCC_TEMPLATE, "style": STYLE_TEMPLATE}
