# 分段线性神经网络验证模块
