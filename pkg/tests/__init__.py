# 测试模块

