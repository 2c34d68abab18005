"""
Auditing the two backbones
==========================

Builds both full-size networks for 50x50x3 inputs and prints the counts
that matter when comparing against published layer and parameter figures.
"""

from mrinet import build_mobilenet_v2, build_resnet50, model_summary

resnet = model_summary(build_resnet50())
print("ResNet-50")
print("  stages:", ", ".join(resnet.stages))
print(f"  convolutions: {resnet.conv_layers} ({resnet.projection_shortcuts} projection shortcuts)")
print(f"  backbone trainable: {resnet.backbone_param_count:,}")
print(f"  backbone incl. running stats: {resnet.backbone_total:,}")
print(f"  head: {resnet.head_param_count:,}")
print(f"  feature width: {resnet.feature_width}")

mobile = model_summary(build_mobilenet_v2())
print("MobileNetV2")
print(f"  bottleneck blocks: {mobile.blocks}")
print(f"  convolutions: {mobile.conv_layers} (depthwise {mobile.depthwise_conv_layers})")
print(f"  backbone trainable: {mobile.backbone_param_count:,}")
print(f"  multiply-adds per 50x50 image: {mobile.multiply_adds:,}")

# The audit notes explain how layer counts map onto the published numbers.
for note in resnet.notes + mobile.notes:
    print("note:", note)
