# 路由模块
