from rlrrt.env.dynamics import ACTION_BOUNDS, ACTION_NAMES, RobotKind
from rlrrt.env.observation import N_FRAMES, VELOCITY_SCALE, ObservationScale
from rlrrt.env.reward import DEFAULT_WEIGHTS, REWARD_FEATURES
from rlrrt.env.tabulate import to_markdown


def make_observation_space_table(n_beams: int = 64):
    scale = ObservationScale()

    records = [
        {
            "size": N_FRAMES * n_beams,
            "desc": f"Lidar ranges, {N_FRAMES} frames oldest first",
            "norm": f"/ max_range ({scale.max_range:g} m)",
        },
        {
            "size": 2,
            "desc": "Goal in the robot frame",
            "norm": f"/ {scale.position_scale:g} m",
        },
        {
            "size": 2,
            "desc": "Robot velocity (see below)",
            "norm": "/ per-robot maxima",
        },
        {
            "size": 1,
            "desc": "Heading",
            "norm": "/ pi",
        },
    ]

    keymap = {
        "idx": "Index Range",
        "size": "Array Length",
        "desc": "Description",
        "norm": "Normalization",
    }

    new_records = []

    bit_floor = 0
    for record in records:
        bit_ceil = bit_floor + record["size"] - 1
        record["idx"] = f"{bit_floor} - {bit_ceil}"
        bit_floor = bit_ceil + 1

        new_records.append({v: record[k] for k, v in keymap.items()})

    print(to_markdown(new_records))


def make_velocity_table():
    velocity = {
        RobotKind.DIFF_DRIVE: ("v", "omega"),
        RobotKind.CAR: ("v", "steer"),
        RobotKind.ASTEROID: ("body-frame xdot", "body-frame ydot"),
    }

    rows = [
        {
            "Robot": kind.value,
            "Velocity": ", ".join(velocity[kind]),
            "Scale": ", ".join(f"{s:.3f}" for s in VELOCITY_SCALE[kind]),
        }
        for kind in RobotKind
    ]

    print(to_markdown(rows))


def make_action_space_table():
    rows = []

    for kind in RobotKind:
        for name, (lo, hi) in zip(ACTION_NAMES[kind], ACTION_BOUNDS[kind]):
            rows.append({"Robot": kind.value, "Action": name, "Low": lo, "High": hi})

    print(to_markdown(rows, float_format=".2f"))


def make_reward_table():
    rows = [
        {
            "Robot": kind.value,
            "Default weights": ", ".join(
                f"{name}={DEFAULT_WEIGHTS[kind][name]:g}" for name in REWARD_FEATURES[kind]
            ),
        }
        for kind in RobotKind
    ]

    print(to_markdown(rows))


if __name__ == "__main__":
    make_observation_space_table()
    print()
    make_velocity_table()
    print()
    make_action_space_table()
    print()
    make_reward_table()
