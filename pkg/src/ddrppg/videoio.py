"""Raw-array video container and sidecar box files.

A ``.raw`` video file is a one-line JSON header (shape, dtype, fps) followed
by the little-endian pixel bytes.  Boxes ride in ``<stem>.boxes.csv`` with
lines ``frame_index,x,y,w,h``; a single line means a static box.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class VideoFormatError(ValueError):
    pass


def save_raw_video(path, video: np.ndarray, fps: float):
    video = np.ascontiguousarray(video, dtype=np.float32)
    header = {
        "shape": list(video.shape),
        "dtype": "<f4",
        "fps": float(fps),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(video.tobytes())


def load_raw_video(path):
    """Returns (video array, fps)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise VideoFormatError(f"bad raw video header in {path}") from exc
        data = fh.read()
    shape = tuple(header["shape"])
    dtype = np.dtype(header["dtype"])
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(data) != expected:
        raise VideoFormatError(
            f"{path}: payload is {len(data)} bytes, header implies {expected}"
        )
    video = np.frombuffer(data, dtype=dtype).reshape(shape)
    return video.astype(np.float64), float(header["fps"])


def load_video(path):
    """Load a video from a .raw container or a common container format."""
    path = Path(path)
    if path.suffix == ".raw":
        return load_raw_video(path)
    try:
        import cv2
    except ImportError as exc:
        raise VideoFormatError(
            f"{path}: container decoding needs opencv; use .raw instead"
        ) from exc
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise VideoFormatError(f"cannot open video {path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 30.0
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(frame[:, :, ::-1].astype(np.float64) / 255.0)
    cap.release()
    if not frames:
        raise VideoFormatError(f"no frames decoded from {path}")
    return np.stack(frames), float(fps)


def read_boxes_csv(path):
    """Parse a sidecar box file into a list of (frame_index, x, y, w, h)."""
    boxes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise VideoFormatError(f"{path}:{lineno}: expected 5 fields")
            try:
                boxes.append(tuple(int(p) for p in parts))
            except ValueError as exc:
                raise VideoFormatError(f"{path}:{lineno}: non-integer field") from exc
    if not boxes:
        raise VideoFormatError(f"{path}: no boxes")
    return boxes


def write_boxes_csv(path, boxes):
    with open(path, "w") as fh:
        for box in boxes:
            fh.write(",".join(str(int(v)) for v in box) + "\n")
