"""Network topology analysis and numeric conv kernels."""
from .export import discrepancy_text, layer_rows, layer_table, to_dot
from .graph import (
    BlockConfig,
    Discrepancy,
    LayerSpec,
    NetGraph,
    Node,
    ParamCount,
    ShapeError,
    ShapeReport,
    TensorShape,
    build_table1_graph,
    compound_scale,
    conv_out_shape,
    conv_params,
    count_parameters,
    parameter_shapes,
    propagate_shapes,
    yolov7_rows,
)
from .kernels import (
    ConvKernel,
    conv2d_forward,
    fusion_error,
    random_repconv,
    repconv_branches,
    repconv_fuse,
    silu,
)
