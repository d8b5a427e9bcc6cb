# Copyright 2026 The FRDet Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""FRDet: fire-residual one-stage detector toolkit."""

from ._core import (
    Box,
    ConfigError,
    Detection,
    Detector,
    DomainError,
    Error,
    IoError,
    KittiLabel,
    NetworkConfig,
    NumericError,
    ParseError,
    Sample,
    ShapeError,
    TrainConfig,
    analyze,
    conv_param_count,
    darknet_block_param_count,
    evaluate_directories,
    format_kitti_labels,
    fr_param_count,
    gaussian_nll,
    generate_synthetic,
    iou,
    load_dataset,
    nms,
    parse_kitti_labels,
    read_ppm,
    set_num_threads,
    sweep,
    write_dataset,
    write_ppm,
)

__version__ = "0.1.0"
